"""Two-stage latent text diffusion at desk scale.

Stage one compresses paragraphs into k fixed-size latent codes with a
variational embedder; stage two generates those codes with a
continuous-time conditional diffusion model. Everything runs on a
self-contained float64 autodiff core; no ML framework required.
"""

__version__ = "0.1.0"
