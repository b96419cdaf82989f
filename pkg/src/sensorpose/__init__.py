"""Object-centric sensor pose optimisation on virtual rails.

Two pipelines share one rasterizer: gradient ascent on a differentiable
visibility score, and max-min integer programming over a precomputed
visibility matrix.
"""
__version__ = "0.1.0"
