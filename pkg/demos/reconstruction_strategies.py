# ---
# jupyter:
#   jupytext:
#     formats: ipynb,py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Filling in the missing axis
#
# A station sweeps azimuth and elevation in different slots, so every
# measurement carries only one of the two angles. Three strategies rebuild
# complete frames:
#
# * `full` interpolates both axes to every slot time,
# * `dominant` keeps the slots of the axis that varies more and interpolates the other,
# * `merge` pairs consecutive slots and pretends they were simultaneous.
#
# We compare them on a moving board by the per-frame residual of the final
# fit and by the error against the ground truth.

# %%
import numpy as np

from lhcalib.pipeline import CalibrationConfig, calibrate, frames_from_stream, pose_errors
from lhcalib.simulator import QUANTIZATION_ONLY, random_setup, scenario_for_setup, simulate_capture

# %% [markdown]
# First a look at the frames themselves on one capture. The merge strategy
# halves the frame count and its azimuth/elevation pairs are 8.3 ms apart.

# %%
setup = random_setup(np.random.default_rng(1002))
scenario = scenario_for_setup(setup, np.random.default_rng(2020), noise=QUANTIZATION_ONLY)
master, slave, truth = simulate_capture(scenario, seed=0)
for strategy in ("full", "dominant", "merge"):
    frames = frames_from_stream(master, strategy)
    print(f"{strategy:9s} {len(frames)} frames, first at t={frames[0].t:.4f} s")

# %% [markdown]
# Now the whole pipeline for each strategy on a few captures. This takes a
# couple of minutes.

# %%
rows = []
for k in range(3):
    sc = scenario_for_setup(setup, np.random.default_rng(2020 + k), noise=QUANTIZATION_ONLY)
    m, s, tr = simulate_capture(sc, seed=k)
    for strategy in ("full", "dominant", "merge"):
        res = calibrate(m, s, CalibrationConfig(geometry=sc.geometry, strategy=strategy))
        err = pose_errors([res.slave_pose], tr.relative_slave_pose)[0]
        per_frame = res.epsilon_final / res.diagnostics["refined_frames"]
        rows.append((k, strategy, per_frame, np.linalg.norm(err[:3])))
        print(f"capture {k} {strategy:9s} eps_L/frame {per_frame:.3g}  position error {rows[-1][3]:.1f} mm")

# %% [markdown]
# Averaged over the captures:

# %%
for strategy in ("full", "dominant", "merge"):
    sel = [r for r in rows if r[1] == strategy]
    print(f"{strategy:9s} eps_L/frame {np.mean([r[2] for r in sel]):.3g}  position error {np.mean([r[3] for r in sel]):.1f} mm")
