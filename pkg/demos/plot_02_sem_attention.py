"""
Semantic cross-attention by hand
================================

Each reflectance position attends over the semantic positions. With one
channel, identity projections and no normalization the attention weights can be
checked by hand.
"""

import numpy as np
import torch
from semlle.sem_attention import SemanticEmbedding, correlation_map, sem_forward

block = SemanticEmbedding(1, layer_norm=False, feedforward=False).double()
with torch.no_grad():
    for lin in (block.key, block.query, block.value):
        lin.weight.fill_(1.0)
        lin.bias.zero_()

# two positions side by side with feature values 1 and 0
feats = np.array([[[1.0], [0.0]]])
A = correlation_map(block, feats, feats)
print("attention map\n", A.round(4))
print("softmax([1, 0]) =", (np.exp([1, 0]) / np.exp([1, 0]).sum()).round(4))

# the output adds the attended values back onto the input
print("output", sem_forward(block, feats, feats).ravel().round(4))

# a full block: layer norms, projections and the feed-forward network
torch.manual_seed(0)
block = SemanticEmbedding(8, sem_channels=16).double()
rng = np.random.default_rng(0)
refl, sem = rng.normal(size=(4, 4, 8)), rng.normal(size=(4, 4, 16))
out = sem_forward(block, refl, sem)
print("reflectance", refl.shape, "+ semantic", sem.shape, "->", out.shape)
print("parameters in one block:", sum(p.numel() for p in block.parameters()))
