"""posediff: a desk-scale lab for skeleton-conditioned latent diffusion.

Subpackages follow the pipeline: synthdata (procedural dataset),
skeleton (condition images and joint heatmaps), latent (tiny
autoencoder), posenet (keypoint estimator), diffusion (schedules, UNet,
conditioning variants, training, samplers), hgloss (heatmap-weighted
denoising loss), metrics (AP/CAP/PCE, FID/KID) and harness (CLI and
experiment recipes).
"""

__version__ = "0.1.0"
