"""
Splitting a dark image into illumination and reflectance
========================================================

A low-light picture is modelled as illumination times reflectance. The
illumination is the per-pixel channel maximum and the reflectance is what is
left after dividing it out.
"""

# one of the shipped low/high training pairs
import numpy as np
from semlle import data, retinex, imaging

low, high = data.overfit_suite().load(0)
print("low-light mean %.3f, normal-light mean %.3f" % (low.mean(), high.mean()))

# decompose: illumination is H x W x 1, reflectance keeps the colour
illum, refl = retinex.decompose(low)
print("illumination", illum.shape, "range [%.3f, %.3f]" % (illum.min(), illum.max()))
print("reflectance ", refl.shape, "range [%.3f, %.3f]" % (refl.min(), refl.max()))

# the reflectance of the dark and the bright image are much closer than the images
print("PSNR low vs high:               %.2f dB" % imaging.psnr(low, high))
print("PSNR reflectances, low vs high: %.2f dB" % imaging.psnr(refl, retinex.decompose(high).reflectance))

# multiplying back recovers the input up to the epsilon guard
err = np.abs(retinex.recompose((illum, refl)) - low).max()
print("round-trip error %.2e" % err)

# brightening the illumination alone already lifts the image: a gamma below 1 raises dark values
from semlle.network import apply_gamma
brighter = retinex.recompose((apply_gamma(illum, 0.5), refl))
print("PSNR after gamma 0.5 on the illumination: %.2f dB" % imaging.psnr(brighter, high))
