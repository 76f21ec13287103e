"""Saliency sampling bottleneck layers, networks and tooling on a small numpy autodiff engine."""

__version__ = "0.1.0"
