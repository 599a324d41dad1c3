"""End-to-end pipeline: matching, filtering, sparsification, interpolation,
and variational refinement, with benchmark presets and a flat key-value
config format."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from .edges import EdgeMap, GeodesicParams, detect_edges, save_edges
from .errors import InvalidInputError, PipelineStageError
from .filtering import FilterParams, MatchSet, region_filter, sparsify, two_pass_filter
from .flow import FlowField
from .image import Image, PyramidConfig, save_image, to_cielab
from .interpolate import InterpParams, interpolate
from .matcher import DESCRIPTOR_CENSUS, DESCRIPTOR_SIFT, MatchingParams, match_full
from .superpixels import SuperpixelSegmentation, segment
from .variational import VariationalParams, build_mask, refine

PRESETS = ("kitti", "sintel")


@dataclass(frozen=True)
class PipelineConfig:
    """All stage parameter records plus the superpixel grid step."""

    matching: MatchingParams = field(default_factory=MatchingParams)
    filter: FilterParams = field(default_factory=FilterParams)
    geodesic: GeodesicParams = field(default_factory=GeodesicParams)
    interp: InterpParams = field(default_factory=InterpParams)
    variational: VariationalParams = field(default_factory=VariationalParams)
    pyramid: PyramidConfig = field(default_factory=PyramidConfig)
    grid_step: int = 20
    preset: str = "kitti"


def config_from_preset(name: str, seed: int = 0) -> PipelineConfig:
    """Benchmark presets.

    kitti: SIFT features, epsilon 1, s 7, superpixel size 20, neighborhood
    150, 2 variational iterations. sintel: Census features, epsilon 7, s 4,
    superpixel size 50, neighborhood 200, 5 variational iterations.
    """
    if name == "kitti":
        return PipelineConfig(
            matching=MatchingParams(descriptor=DESCRIPTOR_SIFT, seed=seed),
            filter=FilterParams(epsilon=1.0, min_matches_s=7),
            interp=InterpParams(neighborhood_size=150, seed=seed),
            variational=VariationalParams(outer_iterations=2),
            grid_step=20,
            preset="kitti",
        )
    if name == "sintel":
        return PipelineConfig(
            matching=MatchingParams(descriptor=DESCRIPTOR_CENSUS, seed=seed),
            filter=FilterParams(epsilon=7.0, min_matches_s=4),
            interp=InterpParams(neighborhood_size=200, seed=seed),
            variational=VariationalParams(outer_iterations=5),
            grid_step=50,
            preset="sintel",
        )
    raise InvalidInputError(f"unknown preset {name!r} (expected one of {PRESETS})")


_SECTIONS = {
    "matching": (MatchingParams, "matching"),
    "filter": (FilterParams, "filter"),
    "geodesic": (GeodesicParams, "geodesic"),
    "interp": (InterpParams, "interp"),
    "variational": (VariationalParams, "variational"),
    "pyramid": (PyramidConfig, "pyramid"),
}


def _coerce(current, text: str):
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise InvalidInputError(f"expected a boolean, got {text!r}")
    if current is None or isinstance(current, int):
        if text.lower() == "none":
            return None
        return int(text)
    if isinstance(current, float):
        return float(text)
    return text


def apply_config_overrides(config: PipelineConfig, overrides: dict[str, str]) -> PipelineConfig:
    """Apply dotted-key overrides (e.g. `filter.epsilon`, `grid_step`)."""
    for key, text in overrides.items():
        if key == "preset":
            continue
        if key == "grid_step":
            config = dataclasses.replace(config, grid_step=int(text))
            continue
        if key == "seed":
            config = dataclasses.replace(
                config,
                matching=dataclasses.replace(config.matching, seed=int(text)),
                interp=dataclasses.replace(config.interp, seed=int(text)),
            )
            continue
        if "." not in key:
            raise InvalidInputError(f"unknown config key {key!r}")
        section, name = key.split(".", 1)
        if section not in _SECTIONS:
            raise InvalidInputError(f"unknown config section {section!r}")
        attr = _SECTIONS[section][1]
        record = getattr(config, attr)
        if not hasattr(record, name):
            raise InvalidInputError(f"unknown config key {key!r}")
        value = _coerce(getattr(record, name), text)
        config = dataclasses.replace(config, **{attr: dataclasses.replace(record, **{name: value})})
    return config


def parse_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Flat `key = value` lines; `#` starts a comment."""
    overrides: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"{path}:{lineno}: expected `key = value`")
            key, value = (part.strip() for part in line.split("=", 1))
            overrides[key] = value
    return overrides


def load_config(path: str | os.PathLike | None = None, preset: str | None = None,
                seed: int | None = None) -> PipelineConfig:
    """Resolve preset (file key or flag), then apply file overrides, then
    the explicit seed."""
    overrides = parse_config_file(path) if path else {}
    preset_name = overrides.get("preset", preset or "kitti")
    config = config_from_preset(preset_name, seed=seed or 0)
    config = apply_config_overrides(config, overrides)
    if seed is not None:
        config = apply_config_overrides(config, {"seed": str(seed)})
    return config


@dataclass
class PipelineResult:
    """Final flow plus intermediate stage artifacts.

    raw_flow and filtered_flow are None when the run resumed from an
    injected match set (the matching stages never executed).
    """

    flow: FlowField
    raw_flow: FlowField | None
    filtered_flow: FlowField | None
    matches: MatchSet
    edges: EdgeMap
    segmentation: SuperpixelSegmentation
    interpolated: FlowField
    domain_mask: np.ndarray


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError(name, exc) from exc


def run_pipeline(config: PipelineConfig, img1: Image, img2: Image,
                 edge_map: EdgeMap | None = None,
                 matches: MatchSet | None = None,
                 dump_dir: str | os.PathLike | None = None) -> PipelineResult:
    """Execute the full pipeline.

    edge_map substitutes the built-in detector (e.g. a learned boundary
    map); matches, when given, re-enters the pipeline after sparsification
    (resuming from a dumped match artifact). dump_dir writes per-stage
    artifacts for debugging and resumption.
    """
    if (img1.width, img1.height) != (img2.width, img2.height):
        raise InvalidInputError("image pair dimensions differ")

    raw = filtered = None
    if matches is None:
        raw = _stage("matching", match_full, img1, img2, config.matching, config.pyramid)
        filtered, errors = _stage("filtering", two_pass_filter, img1, img2, raw,
                                  config.matching, None, config.filter, config.pyramid)
        filtered = _stage("filtering", region_filter, filtered, config.filter)
        matches = _stage("sparsification", sparsify, filtered, errors, config.filter)

    if edge_map is None:
        edge_map = _stage("edges", detect_edges, img1)
    elif (edge_map.width, edge_map.height) != (img1.width, img1.height):
        raise PipelineStageError("edges", InvalidInputError("edge map dimensions differ from the frames"))

    seg = _stage("superpixels", segment, to_cielab(img1), config.grid_step)
    dense = _stage("interpolation", interpolate, matches, seg, edge_map,
                   config.interp, config.geodesic.euclidean_offset)
    mask = build_mask(dense)
    final = _stage("variational", refine, img1, img2, dense, config.variational)

    if dump_dir is not None:
        os.makedirs(dump_dir, exist_ok=True)
        from .flowio import write_flo

        matches.save_text(os.path.join(dump_dir, "matches.txt"))
        save_edges(os.path.join(dump_dir, "edges.edg"), edge_map)
        _dump_labels_png(os.path.join(dump_dir, "labels.png"), seg)
        write_flo(os.path.join(dump_dir, "interpolated.flo"), dense)

    return PipelineResult(flow=final, raw_flow=raw, filtered_flow=filtered, matches=matches,
                          edges=edge_map, segmentation=seg, interpolated=dense,
                          domain_mask=mask)


def _dump_labels_png(path: str, seg: SuperpixelSegmentation) -> None:
    import cv2

    labels = seg.labels
    if seg.count > 65535:
        labels = labels % 65536
    cv2.imwrite(path, labels.astype(np.uint16))


def save_visualization(path: str | os.PathLike, flow: FlowField,
                       max_magnitude: float | None = None) -> None:
    from .flowio import visualize

    save_image(path, visualize(flow, max_magnitude))
