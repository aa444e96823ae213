"""
The MFCC baseline frontend
==========================

39-dimensional MFCCs (13 cepstra + deltas + delta-deltas) at a 10 ms hop,
optionally spliced with a 5-frame context window, stored in the toolkit's
bit-exact binary feature format.
"""
import io

import numpy as np

from afprobe import MfccConfig, mfcc, read_features, splice, write_features

###############################################################################
# Compute features for one second of audio
# ----------------------------------------

fs = 16000
t = np.arange(fs) / fs
wave = 0.5 * np.sin(2 * np.pi * 400.0 * t) + 0.01 * np.random.default_rng(0).standard_normal(fs)

feats = mfcc(wave, MfccConfig(), utterance_id="demo")
print(f"{feats.n_frames} frames x {feats.dim} dims")
print(f"frame rate {feats.frame_rate} Hz, first frame centered at {feats.offset:.4f} s")

###############################################################################
# Context splicing
# ----------------
# Each frame is concatenated with its two neighbors on either side; edge
# frames are replicated, so the frame count is unchanged.

spliced = splice(feats, 5)
print(f"spliced: {spliced.n_frames} frames x {spliced.dim} dims")
assert np.array_equal(spliced.data[0, 2 * feats.dim : 3 * feats.dim], feats.data[0])

###############################################################################
# The byte format round-trips bit-exactly
# ---------------------------------------

buf = io.BytesIO()
write_features(spliced, buf)
buf.seek(0)
again = read_features(buf)
assert again == spliced
print(f"round-tripped {len(buf.getvalue())} bytes bit-exactly")

###############################################################################
# Scaling the waveform only shifts c0
# -----------------------------------
# A louder recording shifts the energy coefficient of every frame by the
# same constant and leaves the spectral shape coefficients untouched.

louder = mfcc(4.0 * wave, MfccConfig())
shift = louder.data[:, 0] - feats.data[:, 0]
print(f"c0 shift: {shift.mean():.3f} (spread {shift.max() - shift.min():.2e})")
print(f"c1..c12 max change: {np.abs(louder.data[:, 1:13] - feats.data[:, 1:13]).max():.2e}")
