"""Hybrid quantum-classical latent diffusion toolkit.

Statevector simulation of variational circuits, trainability and noise
diagnostics, a small reverse-mode autodiff engine, latent-diffusion
models whose compute blocks can be swapped for quantum layers, sample
quality metrics, and a synthetic retina-image data generator, all tied
together by the ``qlatent`` command line tool.
"""

__version__ = "0.1.0"
