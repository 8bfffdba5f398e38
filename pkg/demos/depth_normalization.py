"""Why the face-window depth normalization matters.

A raw depth map stores millimetres in a wide integer range. Mapping the
whole sensor range onto 8 bits leaves a face (whose relief spans a few
centimetres) with a handful of grey levels: the "grid effect". The two
normalizers in ``mmfas.depth_prep`` spend all 256 levels on the face
instead.
"""

import numpy as np

from mmfas.depth_prep import (FaceBox, crop_multimodal, normalize_depth_alg1, normalize_depth_alg2,
                              quantize_ir_uniform)

rng = np.random.default_rng(0)

# A 120x160 scene: wall at 2.5 m, a face ~80 cm away with a 6 cm nose bump.
h, w = 120, 160
yy, xx = np.mgrid[0:h, 0:w]
face = FaceBox(60, 30, 40, 50)
cx, cy = face.x + face.w / 2, face.y + face.h / 2
# the head ellipse slightly overfills the detector box, as real face boxes do
r2 = ((xx - cx) / (0.75 * face.w)) ** 2 + ((yy - cy) / (0.75 * face.h)) ** 2
depth = np.where(r2 < 1, 800 - 60 * np.sqrt(np.clip(1 - r2, 0, 1)), 2500)
depth = np.rint(depth + rng.normal(0, 2, depth.shape)).astype(np.int64)
depth[rng.random(depth.shape) < 0.05] = 0  # sensor holes

region = face.slices()
naive = quantize_ir_uniform(depth, max_raw=2**16 - 1)
print("distinct grey levels on the face")
print("  uniform 16-bit -> 8-bit :", len(np.unique(naive[region])))
print("  alg1 (face min..max)    :", len(np.unique(normalize_depth_alg1(depth, face)[region])))
print("  alg2 (face mean +/- 50) :", len(np.unique(normalize_depth_alg2(depth, face)[region])))

# Holes inside the 1.3x portrait box are filled with the face mean before mapping.
out = normalize_depth_alg2(depth, face)
rgb = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
ir = quantize_ir_uniform(rng.integers(0, 2**24, (h, w)))
rgb_c, depth_c, ir_c = crop_multimodal(rgb, out, ir, face)
print("portrait crop shape:", depth_c.shape, "| levels used in crop:", depth_c.min(), "..", depth_c.max())
