"""Loss-perturbation private GAN training with Renyi-DP accounting."""

__version__ = "0.1.0"
