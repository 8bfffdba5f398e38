"""How much do low resolution and blur cost? PSNR / SSIM of degraded faces.

Each reference is shrunk to 16x16 or 8x8 (optionally blurred with a 3x3,
sigma 1.5 Gaussian), enlarged back, and scored against the original.
"""

import numpy as np

from mmfas.quality import DegradeSpec, degradation_quality, to_uint8

rng = np.random.default_rng(1)
n = 112
yy, xx = np.mgrid[0:n, 0:n] / (n - 1) * 2 - 1
d = (xx / 0.6) ** 2 + (yy / 0.8) ** 2
face = np.where(d < 1, 150 + 60 * np.sqrt(np.clip(1 - d, 0, 1)), 60.0)
for ex in (-0.25, 0.25):
    face -= 70 * np.exp(-(((xx - ex) / 0.08) ** 2 + ((yy + 0.2) / 0.05) ** 2))
reference = to_uint8(face + rng.normal(0, 3, face.shape))

for res in (16, 8):
    for blur in (False, True):
        score = degradation_quality(reference, DegradeSpec(res, blur))
        print(f"{res:2d}x{res:<2d} blur={'yes' if blur else 'no ':3s}  {score}")
