"""
The four training losses
========================

Pixel, edge, semantic and multimodal terms, each on a tiny case with a known
answer, then their weighted sum.
"""

import numpy as np
from semlle import objective
from semlle.semantic_prior import make_toy_backend, extract_prior
from semlle.text_prior import ToyVisionLanguageBackend, multimodal_loss

gray5, gray6 = np.full((8, 8, 3), 0.5), np.full((8, 8, 3), 0.6)
print("pixel loss 0.5 vs 0.6:   ", objective.pixel_loss(gray5, gray6))
print("edge loss of a shift:     ", objective.edge_loss(gray5 + 0.1, gray5))

p, q = np.array([[[0.5, 0.5]]]), np.array([[[0.25, 0.75]]])
print("KL([.5,.5] || [.25,.75]): %.5f" % objective.semantic_loss(p, q))

# the multimodal term prefers images closer to the "high-light image" prompt
vl = ToyVisionLanguageBackend(seed=0)
low, high = np.full((32, 32, 3), 0.05), np.full((32, 32, 3), 0.8)
print("L_mul dark %.4f, bright %.4f" % (multimodal_loss(vl, low), multimodal_loss(vl, high)))
# the toy encoder is random, so the sign of this difference carries no meaning;
# only a pretrained encoder makes it informative

# the weighted total, with segmentation maps from the frozen toy backend
seg = make_toy_backend(seed=0)
rng = np.random.default_rng(0)
out, gt = rng.uniform(size=(2, 32, 32, 3))
br = objective.total_loss(out[None], gt[None], extract_prior(seg, out).seg_map[None],
                          extract_prior(seg, gt).seg_map[None], vl)
print({k: round(v, 5) for k, v in br.to_dict().items()})
