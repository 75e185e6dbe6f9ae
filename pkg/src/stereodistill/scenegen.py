"""Procedural stereo scene generator with exact ground truth.

Scenes are textured layered rectangles over a textured background at
distinct disparities. The right view is rendered from the same layer
geometry (painter's algorithm over shifted rectangles), so disocclusions
show true background content and, with zero image noise, every pixel
visible in both views is photo-consistent to the bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imageio import (
    FloatMap,
    Image,
    read_pfm,
    read_pgm_labels,
    read_ppm,
    write_pfm,
    write_pgm_labels,
    write_ppm,
)

TEXTURE_KINDS = ("noise", "stripes", "checker")


class SceneError(ValueError):
    pass


@dataclass
class SceneSpec:
    width: int = 64
    height: int = 64
    num_layers: int = 4
    disparity_range: tuple[float, float] = (2.0, 12.0)
    textures: tuple[str, ...] = ("noise",)
    noise_sigma: float = 0.02
    noise_detail: float = 0.35
    flat_patches: int = 0
    depth_cues: bool = False
    slanted: bool = False
    seed: int = 0

    def __post_init__(self):
        d_min, d_max = self.disparity_range
        if d_min < 1:
            raise SceneError(f"d_min must be >= 1, got {d_min}")
        if d_max >= self.width / 4:
            raise SceneError(f"d_max must be < width/4 ({self.width / 4}), got {d_max}")
        if not (2 <= self.num_layers <= 8):
            raise SceneError(f"num_layers must be in [2, 8], got {self.num_layers}")
        for t in self.textures:
            if t not in TEXTURE_KINDS:
                raise SceneError(f"unknown texture '{t}'")
        if not (0.0 <= self.noise_sigma <= 1.0):
            raise SceneError(f"noise_sigma must be in [0, 1], got {self.noise_sigma}")
        if not (0.0 <= self.noise_detail <= 1.0):
            raise SceneError(f"noise_detail must be in [0, 1], got {self.noise_detail}")
        if self.flat_patches < 0:
            raise SceneError("flat_patches must be >= 0")


@dataclass
class CameraModel:
    focal_px: float = 500.0
    baseline_m: float = 0.12
    depth_cap_m: float = 80.0

    def __post_init__(self):
        if self.focal_px <= 0 or self.baseline_m <= 0 or self.depth_cap_m <= 0:
            raise SceneError("camera parameters must be positive")


@dataclass
class StereoSample:
    left: Image
    right: Image
    gt_disparity: FloatMap
    occlusion_mask: np.ndarray  # (H, W) bool, True = visible in both views
    class_labels: np.ndarray  # (H, W) int, 0 = background


@dataclass
class _Strip:
    """A constant-disparity vertical slice of a layer, in left-view coords."""

    x0: int
    x1: int  # exclusive
    y0: int
    y1: int  # exclusive
    disp: int
    tex_id: int
    label: int
    order: int = 0  # painter tiebreak among equal disparities


def _value_noise(rng: np.random.Generator, h: int, w: int, cell: int = 4) -> np.ndarray:
    """Smooth random blobs: a coarse uniform grid, bilinearly upsampled.

    Low-frequency texture survives image downscaling, which is what lets
    coarse-scale matching stay informative under pixel noise.
    """
    gh, gw = h // cell + 2, w // cell + 2
    grid = rng.uniform(0.0, 1.0, size=(gh, gw, 3))
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    return (
        grid[y0][:, x0] * (1 - fy) * (1 - fx)
        + grid[y0][:, x0 + 1] * (1 - fy) * fx
        + grid[y0 + 1][:, x0] * fy * (1 - fx)
        + grid[y0 + 1][:, x0 + 1] * fy * fx
    )


def _make_texture(
    rng: np.random.Generator, kind: str, h: int, w: int, detail: float = 0.35
) -> np.ndarray:
    """World-anchored texture, (h, w, 3) floats in [0, 1].

    detail is the white-noise fraction blended into the smooth blob texture:
    0 gives pure low-frequency blobs, 1 pure per-pixel noise.
    """
    if kind == "noise":
        blob = _value_noise(rng, h, w)
        if detail <= 0.0:
            return blob
        white = rng.uniform(0.0, 1.0, size=(h, w, 3))
        return np.clip(blob * (1.0 - detail) + white * detail, 0.0, 1.0)
    c1 = rng.uniform(0.1, 0.9, size=3)
    c2 = rng.uniform(0.1, 0.9, size=3)
    while np.abs(c1 - c2).max() < 0.25:
        c2 = rng.uniform(0.1, 0.9, size=3)
    if kind == "stripes":
        # horizontal bands: constant along x, ambiguous for stereo matching
        period = int(rng.integers(3, 9))
        band = (np.arange(h) // period) % 2
        rows = np.where(band[:, None] == 0, c1[None, :], c2[None, :])
        return np.broadcast_to(rows[:, None, :], (h, w, 3)).copy()
    # checker
    cell = int(rng.integers(4, 9))
    grid = ((np.arange(h)[:, None] // cell) + (np.arange(w)[None, :] // cell)) % 2
    return np.where(grid[:, :, None] == 0, c1[None, None, :], c2[None, None, :])


def _cue_fraction(spec: SceneSpec, disp: float) -> float:
    d_min, d_max = spec.disparity_range
    return float(np.clip((disp - d_min) / max(d_max - d_min, 1e-9), 0.0, 1.0))


def _layer_strips(
    rng: np.random.Generator, spec: SceneSpec, layer_id: int, disp: int, world_w: int
) -> list[_Strip]:
    w, h = spec.width, spec.height
    if layer_id == 0:
        return [_Strip(0, world_w, 0, h, disp, 0, 0)]
    # fewer layers -> larger rectangles, so per-region interiors stay
    # meaningful at small image sizes
    base_w = w // max(2, spec.num_layers - 1)
    base_h = h // max(2, spec.num_layers - 1)
    if spec.depth_cues:
        # perspective cue: nearer layers are larger
        mult = 0.7 + 0.6 * _cue_fraction(spec, disp)
        base_w = max(6, int(round(base_w * mult)))
        base_h = max(6, int(round(base_h * mult)))
    rw = int(rng.integers(max(6, base_w // 2), min(w - 2, base_w + base_w // 2) + 1))
    rh = int(rng.integers(max(6, base_h // 2), min(h - 2, base_h + base_h // 2) + 1))
    x0 = int(rng.integers(1, w - rw))
    y0 = int(rng.integers(1, h - rh))
    if not spec.slanted:
        return [_Strip(x0, x0 + rw, y0, y0 + rh, disp, layer_id, layer_id)]
    # slanted: disparity steps by one across the rectangle width
    strips = []
    half = max(1, rw // 2)
    direction = int(rng.integers(0, 2)) * 2 - 1
    for sx in range(x0, x0 + rw, half):
        step = (sx - x0) // half
        strips.append(
            _Strip(
                sx,
                min(sx + half, x0 + rw),
                y0,
                y0 + rh,
                disp + direction * step,
                layer_id,
                layer_id,
            )
        )
    return strips


def _flat_patch_strips(
    rng: np.random.Generator, spec: SceneSpec, tex_id: int, bg_disp_of_row: np.ndarray
) -> list[_Strip]:
    """A stereo-hostile texture patch lying flat on the background surface.

    It follows the local background disparity (class label 0): depth there
    is smooth, only the appearance defeats the matcher.
    """
    w, h = spec.width, spec.height
    rw = int(rng.integers(max(8, w // 3), max(10, (3 * w) // 5) + 1))
    rh = int(rng.integers(max(8, h // 3), max(10, (3 * h) // 5) + 1))
    x0 = int(rng.integers(1, w - rw))
    y0 = int(rng.integers(1, h - rh))
    strips = []
    run_start = y0
    for y in range(y0 + 1, y0 + rh + 1):
        if y == y0 + rh or bg_disp_of_row[y] != bg_disp_of_row[run_start]:
            strips.append(
                _Strip(x0, x0 + rw, run_start, y, int(bg_disp_of_row[run_start]), tex_id, 0)
            )
            run_start = y
    return strips


def _sample_disparities(rng: np.random.Generator, spec: SceneSpec) -> list[int]:
    """One distinct integer disparity per layer, ascending; slot 0 = background."""
    d_min, d_max = spec.disparity_range
    lo, hi = int(math.ceil(d_min)), int(math.floor(d_max))
    n = spec.num_layers
    if hi - lo + 1 < n:
        raise SceneError(
            f"disparity range [{d_min}, {d_max}] too narrow for {n} distinct layers"
        )
    edges = np.linspace(lo, hi + 1, n + 1)
    disps = []
    for i in range(n):
        slo, shi = int(math.ceil(edges[i])), int(math.floor(edges[i + 1] - 1e-9))
        slo = max(slo, (disps[-1] + 1) if disps else lo)
        shi = max(shi, slo)
        disps.append(int(rng.integers(slo, shi + 1)))
    return disps


def generate_scene(spec: SceneSpec) -> StereoSample:
    rng = np.random.default_rng(spec.seed)
    w, h = spec.width, spec.height
    pad = int(math.ceil(spec.disparity_range[1])) + 1
    world_w = w + pad

    disps = _sample_disparities(rng, spec)
    lo = int(math.ceil(spec.disparity_range[0]))
    if spec.depth_cues:
        # ground-plane background: far bands at the top, near at the bottom
        n_bands = disps[0] - lo + 1
        bg_disp_of_row = lo + (np.arange(h) * n_bands) // h
    else:
        bg_disp_of_row = np.full(h, disps[0], dtype=np.int64)

    def _shade(disp) -> float:
        # nearer surfaces rendered brighter (cheap atmospheric cue)
        return 0.55 + 0.45 * _cue_fraction(spec, disp)

    strips: list[_Strip] = []
    textures: list[np.ndarray] = []
    for layer_id in range(spec.num_layers):
        # cycle the texture pool so the background always gets the first kind
        kind = spec.textures[layer_id % len(spec.textures)]
        tex = _make_texture(rng, kind, h, world_w, spec.noise_detail)
        if spec.depth_cues:
            if layer_id == 0:
                tex = tex * np.array([_shade(d) for d in bg_disp_of_row])[:, None, None]
            else:
                tex = tex * _shade(disps[layer_id])
        textures.append(tex)
        if layer_id == 0 and spec.depth_cues:
            run_start = 0
            for y in range(1, h + 1):
                if y == h or bg_disp_of_row[y] != bg_disp_of_row[run_start]:
                    strips.append(
                        _Strip(0, world_w, run_start, y, int(bg_disp_of_row[run_start]), 0, 0)
                    )
                    run_start = y
        else:
            strips.extend(_layer_strips(rng, spec, layer_id, disps[layer_id], world_w))
    for j in range(spec.flat_patches):
        tex_id = spec.num_layers + j
        tex = _make_texture(rng, "stripes", h, world_w, spec.noise_detail)
        if spec.depth_cues:
            tex = tex * np.array([_shade(d) for d in bg_disp_of_row])[:, None, None]
        textures.append(tex)
        strips.extend(_flat_patch_strips(rng, spec, tex_id, bg_disp_of_row))

    for i, s in enumerate(strips):
        s.order = i
    strips.sort(key=lambda s: (s.disp, s.order))

    left = np.zeros((h, w, 3))
    right = np.zeros((h, w, 3))
    gt = np.zeros((h, w))
    labels = np.zeros((h, w), dtype=np.int64)
    zright = np.full((h, w), -1.0)

    for s in strips:
        tex = textures[s.tex_id]
        # left view
        lx0, lx1 = max(s.x0, 0), min(s.x1, w)
        if lx1 > lx0:
            left[s.y0 : s.y1, lx0:lx1] = tex[s.y0 : s.y1, lx0:lx1]
            gt[s.y0 : s.y1, lx0:lx1] = s.disp
            labels[s.y0 : s.y1, lx0:lx1] = s.label
        # right view: same strip shifted left by its disparity
        rx0, rx1 = max(s.x0 - s.disp, 0), min(s.x1 - s.disp, w)
        if rx1 > rx0:
            xs = np.arange(rx0, rx1)
            right[s.y0 : s.y1, rx0:rx1] = tex[s.y0 : s.y1, xs + s.disp]
            zright[s.y0 : s.y1, rx0:rx1] = s.disp

    # visible in both views: the pixel's projection wins the right z-buffer
    xs = np.arange(w)[None, :]
    proj = np.rint(xs - gt).astype(np.int64)
    inside = (proj >= 0) & (proj < w)
    proj_c = np.clip(proj, 0, w - 1)
    occ_mask = inside & (zright[np.arange(h)[:, None], proj_c] == gt)

    if spec.noise_sigma > 0:
        left = left + rng.normal(0.0, spec.noise_sigma, size=left.shape)
        right = right + rng.normal(0.0, spec.noise_sigma, size=right.shape)

    return StereoSample(
        left=Image(np.clip(left, 0.0, 1.0)),
        right=Image(np.clip(right, 0.0, 1.0)),
        gt_disparity=FloatMap(gt, np.ones((h, w), dtype=bool)),
        occlusion_mask=occ_mask,
        class_labels=labels,
    )


# -- dataset persistence ---------------------------------------------------------


def derive_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def sample_dir(root, index: int) -> Path:
    return Path(root) / f"{index:04d}"


def write_sample(dirpath, sample: StereoSample) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    write_ppm(d / "left.ppm", sample.left)
    write_ppm(d / "right.ppm", sample.right)
    write_pfm(d / "gt.pfm", sample.gt_disparity)
    write_pgm_labels(d / "occ.pgm", sample.occlusion_mask.astype(np.int64))
    write_pgm_labels(d / "labels.pgm", sample.class_labels)


def read_sample(dirpath) -> StereoSample:
    d = Path(dirpath)
    return StereoSample(
        left=read_ppm(d / "left.ppm"),
        right=read_ppm(d / "right.ppm"),
        gt_disparity=read_pfm(d / "gt.pfm"),
        occlusion_mask=read_pgm_labels(d / "occ.pgm") > 0,
        class_labels=read_pgm_labels(d / "labels.pgm"),
    )


def generate_dataset(spec: SceneSpec, count: int, master_seed: int, out_dir) -> list[Path]:
    """Write `count` scenes with derived per-sample seeds plus a manifest."""
    if count < 1:
        raise SceneError(f"count must be >= 1, got {count}")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    lines = ["index\tpath\tseed"]
    for i in range(count):
        seed_i = derive_seed(master_seed, i)
        spec_i = SceneSpec(
            width=spec.width,
            height=spec.height,
            num_layers=spec.num_layers,
            disparity_range=spec.disparity_range,
            textures=spec.textures,
            noise_sigma=spec.noise_sigma,
            noise_detail=spec.noise_detail,
            flat_patches=spec.flat_patches,
            depth_cues=spec.depth_cues,
            slanted=spec.slanted,
            seed=seed_i,
        )
        d = sample_dir(root, i)
        write_sample(d, generate_scene(spec_i))
        paths.append(d)
        lines.append(f"{i}\t{d.name}\t{seed_i}")
    (root / "manifest.tsv").write_text("\n".join(lines) + "\n")
    return paths


def read_manifest(root) -> list[tuple[int, Path, int]]:
    path = Path(root) / "manifest.tsv"
    if not path.exists():
        raise FileNotFoundError(f"missing manifest: {path}")
    rows = []
    for line in path.read_text().splitlines()[1:]:
        idx, rel, seed = line.split("\t")
        rows.append((int(idx), Path(root) / rel, int(seed)))
    return rows


def disparity_to_depth_value(disp: float, cam: CameraModel) -> float:
    return min(cam.focal_px * cam.baseline_m / disp, cam.depth_cap_m)
