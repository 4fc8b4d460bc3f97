"""
From a raw synthetic trial to 1 s segments
==========================================

Generate one noise-free 4 s trial at 2048 Hz, band-pass it (9-30 Hz,
zero phase), decimate to 256 Hz and cut four 1 s segments. A 12.25 Hz
flicker completes 12 and a quarter cycles per second, so the fitted phase
of each segment moves on by a quarter turn and segments 1-2 end up
opposite segments 3-4.
"""
import numpy as np

from ssvepnet.analysis import fit_sinusoid
from ssvepnet.pipeline import PreprocessConfig, preprocess_dataset
from ssvepnet.synthgen import SynthConfig, generate_dataset

cfg = SynthConfig(subjects=1, trials_per_class=1, snr_db=200.0, harmonic_gain=0.0)
raw = generate_dataset(cfg)
print("raw:", raw)

pre = preprocess_dataset(raw, PreprocessConfig())
print("preprocessed:", pre)

# %%
# Phase of every segment of the 12.25 Hz class, first channel.
k = raw.stimulus.frequencies.index(12.25)
rows = np.flatnonzero(pre.class_id == k)
rows = rows[np.argsort(pre.segment[rows])]
phase, amp = fit_sinusoid(pre.data[rows, 0], 12.25, pre.sample_rate_hz)
for s, (p, a) in enumerate(zip(phase, amp)):
    print(f"segment {s}: phase {p:7.2f} deg  amplitude {a:.3f}")
print("steps:", np.round((np.diff(phase) + 360) % 360, 2))
