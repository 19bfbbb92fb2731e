"""Compress a beamforming matrix, serialize it, and measure what quantization costs.

Run: python demos/codec_tour.py
"""

import numpy as np

from bfipin import codec
from bfipin.codec import Codebook, StreamConfig

rng = np.random.default_rng(0)
config = StreamConfig()
print(f"{config.n_tx}x{config.n_stream} feedback: {config.n_angles} angles per subcarrier, "
      f"{config.n_sub * config.n_angles} per report")

# a random orthonormal V for every subcarrier
z = rng.normal(size=(config.n_sub, 4, 2)) + 1j * rng.normal(size=(config.n_sub, 4, 2))
v = np.linalg.qr(z)[0]

for bits in codec.CODEBOOKS:
    cb = Codebook(*bits)
    report = codec.compress(v, cb)
    payload = codec.serialize_payload(report)
    back = codec.decompress(codec.parse_payload(payload, config, cb))
    # principal angle per column, blind to the column phase the ladder removes
    inner = np.abs(np.einsum("skc,skc->sc", v.conj(), back))
    err = np.degrees(np.arccos(np.clip(inner, 0, 1)))
    print(f"codebook {bits}: {len(payload):5d} payload bytes, "
          f"column error mean {err.mean():6.3f} deg, max {err.max():6.3f} deg")
