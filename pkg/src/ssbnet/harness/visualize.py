"""Saliency map, resized input and adaptively sampled image for one SSB layer."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff import no_grad
from ..errors import ConfigError, ShapeError
from ..network import Network
from ..sampler import bilinear_resize_array, sample
from .data import normalize
from .netpbm import write_pgm, write_ppm

OUTPUT_NAMES = {"saliency": "saliency.pgm", "resized": "resized.ppm", "sampled": "sampled.ppm"}


@dataclass
class Visualization:
    selector: str
    saliency: np.ndarray  # [h, w] in [0, 1]
    resized: np.ndarray  # [h, w, 3] float, 0..255
    sampled: np.ndarray  # [h_r, w_r, 3] float, 0..255


def visualize(net: Network, image: np.ndarray, selector: str) -> Visualization:
    """Run ``image`` (uint8 ``[H, W, 3]``) through ``net`` up to layer ``selector`` and sample it."""
    layer = net.layer(selector)
    if layer.variant.kind not in ("adaptive", "uniform-mechanism"):
        raise ConfigError(f"visualize needs an adaptive or uniform-mechanism sampler, not {layer.variant.kind!r}")
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"visualize: expected an RGB image, got shape {image.shape}")
    size = net.spec.input_size
    pixels = image.astype(np.float64)
    net_in = bilinear_resize_array(pixels, size, size)
    with no_grad():
        feats = net.layer_input(normalize(net_in)[None], selector)
        trace = layer.trace(feats, training=False)
    h, w = feats.shape[1:3]
    resized = bilinear_resize_array(pixels, h, w)
    sampled = sample(resized, trace.weights)
    saliency = np.full((h, w), 0.5) if trace.saliency is None else trace.saliency[0].astype(np.float64)
    return Visualization(selector, saliency, resized, sampled)


def write_visualization(vis: Visualization, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in OUTPUT_NAMES.items()}
    write_pgm(paths["saliency"], vis.saliency * 255.0)
    write_ppm(paths["resized"], vis.resized)
    write_ppm(paths["sampled"], vis.sampled)
    return paths
