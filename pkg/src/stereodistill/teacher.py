"""Stereo teacher: census-based block matching with left-right consistency
filtering, plus the multi-scale prediction ensemble and depth conversion.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imageio import FloatMap, Image, resize_bilinear_image, resize_disparity
from .scenegen import CameraModel


class TeacherError(ValueError):
    pass


@dataclass
class MatcherConfig:
    max_disparity: int = 16
    census_window: int = 7
    aggregation_window: int = 5
    lr_threshold: float = 1.0

    def __post_init__(self):
        if self.census_window < 3 or self.census_window % 2 == 0:
            raise TeacherError("census_window must be odd and >= 3")
        if self.aggregation_window < 3 or self.aggregation_window % 2 == 0:
            raise TeacherError("aggregation_window must be odd and >= 3")
        if self.census_window > 7:
            # window^2 - 1 comparison bits must fit the uint64 descriptor
            raise TeacherError("census_window > 7 exceeds the 64-bit descriptor")


@dataclass
class EnsembleConfig:
    scales: tuple[float, ...] = (1.0, 0.75, 0.5)
    fuse_at: str = "smallest"

    def __post_init__(self):
        if len(self.scales) < 1 or 1.0 not in self.scales:
            raise TeacherError("scales must contain 1.0")
        if list(self.scales) != sorted(self.scales, reverse=True):
            raise TeacherError("scales must be sorted descending")
        if any(not (0.0 < s <= 1.0) for s in self.scales):
            raise TeacherError("scales must lie in (0, 1]")
        if self.fuse_at not in ("smallest", "full"):
            raise TeacherError(f"fuse_at must be 'smallest' or 'full', got {self.fuse_at}")


_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def census_transform(gray: np.ndarray, window: int) -> np.ndarray:
    """Per-pixel census descriptor: bit b set iff neighbor b < center.

    Neighbors scan the window in row-major order (center skipped); borders
    use edge clamping. Returns (H, W) uint64.
    """
    if window % 2 == 0:
        raise TeacherError("census window must be odd")
    gray = np.asarray(gray, dtype=np.float64)
    r = window // 2
    padded = np.pad(gray, r, mode="edge")
    h, w = gray.shape
    bits = np.zeros((h, w), dtype=np.uint64)
    bit = np.uint64(1)
    for di in range(window):
        for dj in range(window):
            if di == r and dj == r:
                continue
            neighbor = padded[di : di + h, dj : dj + w]
            bits |= np.where(neighbor < gray, bit, np.uint64(0))
            bit = bit << np.uint64(1)
    return bits


def _popcount(x: np.ndarray) -> np.ndarray:
    return _POPCOUNT8[x.view(np.uint8).reshape(*x.shape, 8)].sum(axis=-1)


def _hamming(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _popcount(a ^ b).astype(np.float64)


def census_column_mask(width: int, window: int) -> np.ndarray:
    """Per-column descriptor mask selecting bits whose neighbor column is
    inside the image; used to keep border costs clamp-free."""
    r = window // 2
    masks = np.zeros(width, dtype=np.uint64)
    for x in range(width):
        bit = np.uint64(1)
        m = np.uint64(0)
        for di in range(window):
            for dj in range(window):
                if di == r and dj == r:
                    continue
                if 0 <= x + dj - r < width:
                    m |= bit
                bit = bit << np.uint64(1)
        masks[x] = m
    return masks


def _box_sum(cost: np.ndarray, window: int) -> np.ndarray:
    """Window sum over the last two axes with edge-replicated borders."""
    r = window // 2
    padded = np.pad(cost, [(0, 0)] * (cost.ndim - 2) + [(r, r), (r, r)], mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, (window, window), axis=(-2, -1))
    return win.sum(axis=(-2, -1))


def _match_one_direction(
    cen_ref: np.ndarray, cen_other: np.ndarray, cfg: MatcherConfig, sign: int
) -> tuple[np.ndarray, np.ndarray]:
    """WTA disparity for the reference view.

    sign=-1 matches left against right (candidate at x - d), sign=+1 the
    reverse. Costs are mean census-bit mismatch rates over the bits whose
    neighbors are in-bounds in both views, so image borders stay clean.
    Returns (disparity, feasible) arrays.
    """
    h, w = cen_ref.shape
    dmax = cfg.max_disparity
    big = 1e9
    colmask = census_column_mask(w, cfg.census_window)
    volume = np.full((dmax + 1, h, w), big)
    for d in range(dmax + 1):
        if sign < 0:
            ref, oth = cen_ref[:, d:], cen_other[:, : w - d]
            pair = colmask[d:] & colmask[: w - d]
            sl = np.s_[:, d:]
        else:
            ref, oth = cen_ref[:, : w - d], cen_other[:, d:]
            pair = colmask[: w - d] & colmask[d:]
            sl = np.s_[:, : w - d]
        nbits = np.maximum(_popcount(pair).astype(np.float64), 1.0)
        volume[d][sl] = _popcount((ref ^ oth) & pair[None, :]) / nbits[None, :]
    # aggregate the mean cost over feasible window entries only, so border
    # candidates are not poisoned by the infeasible sentinel next to them
    feasible = volume < big / 2
    num = _box_sum(np.where(feasible, volume, 0.0), cfg.aggregation_window)
    den = _box_sum(feasible.astype(np.float64), cfg.aggregation_window)
    volume = np.where(feasible, num / np.maximum(den, 1.0), big)

    best = np.argmin(volume, axis=0)
    disp = best.astype(np.float64)
    # subpixel parabola fit over the three costs around the winner
    inner = (best >= 1) & (best <= dmax - 1)
    iy, ix = np.nonzero(inner)
    b = best[inner]
    c0 = volume[b - 1, iy, ix]
    c1 = volume[b, iy, ix]
    c2 = volume[b + 1, iy, ix]
    denom = c0 - 2.0 * c1 + c2
    # a bit-perfect window (cost 0) needs no refinement; the parabola vertex
    # would otherwise drift off the exact integer
    ok = (denom > 1e-12) & (c0 < big / 2) & (c2 < big / 2) & (c1 > 0)
    delta = np.zeros_like(c1)
    delta[ok] = (c0[ok] - c2[ok]) / (2.0 * denom[ok])
    disp[iy, ix] += np.clip(delta, -0.5, 0.5)
    return disp, feasible[best, np.arange(h)[:, None], np.arange(w)[None, :]]


def compute_disparity(left: Image, right: Image, cfg: MatcherConfig) -> FloatMap:
    """Census block matching with subpixel refinement and LR filtering."""
    if left.data.shape != right.data.shape:
        raise TeacherError(
            f"stereo pair size mismatch: {left.data.shape} vs {right.data.shape}"
        )
    disp_l, disp_r = _left_right_disparities(left, right, cfg)
    return _lr_filter(disp_l, disp_r, cfg)


def _left_right_disparities(left: Image, right: Image, cfg: MatcherConfig):
    cen_l = census_transform(left.gray(), cfg.census_window)
    cen_r = census_transform(right.gray(), cfg.census_window)
    disp_l, feas_l = _match_one_direction(cen_l, cen_r, cfg, sign=-1)
    disp_r, feas_r = _match_one_direction(cen_r, cen_l, cfg, sign=+1)
    disp_l[~feas_l] = -1.0
    disp_r[~feas_r] = -1.0
    valid_l = feas_l
    valid_r = feas_r
    return FloatMap(disp_l, valid_l), FloatMap(disp_r, valid_r)


def _lr_filter(disp_l: FloatMap, disp_r: FloatMap, cfg: MatcherConfig) -> FloatMap:
    h, w = disp_l.data.shape
    xs = np.arange(w)[None, :]
    proj = np.rint(xs - disp_l.data).astype(np.int64)
    inside = (proj >= 0) & (proj < w)
    proj_c = np.clip(proj, 0, w - 1)
    ys = np.arange(h)[:, None]
    partner = disp_r.data[ys, proj_c]
    partner_valid = disp_r.valid[ys, proj_c]
    consistent = (
        disp_l.valid
        & inside
        & partner_valid
        & (np.abs(disp_l.data - partner) <= cfg.lr_threshold)
    )
    data = np.where(consistent, disp_l.data, -1.0)
    return FloatMap(data, consistent)


def ensemble_predict(
    left: Image, right: Image, cfg: MatcherConfig, ens: EnsembleConfig
) -> FloatMap:
    """Multi-scale data ensemble: match at each scale, fuse where valid.

    Fusion happens at the resolution of the smallest scale (or full
    resolution when fuse_at='full'); a fused pixel is invalid only when
    invalid in every per-scale map. The smallest-scale fusion is bilinearly
    upsampled back to full resolution with value scaling.
    """
    if left.data.shape != right.data.shape:
        raise TeacherError(
            f"stereo pair size mismatch: {left.data.shape} vs {right.data.shape}"
        )
    w, h = left.width, left.height
    maps: list[FloatMap] = []
    for s in ens.scales:
        if s == 1.0:
            sl, sr = left, right
        else:
            sw, sh = max(1, round(w * s)), max(1, round(h * s))
            sl = resize_bilinear_image(left, sw, sh)
            sr = resize_bilinear_image(right, sw, sh)
        scfg = MatcherConfig(
            max_disparity=max(2, int(np.ceil(cfg.max_disparity * s))),
            census_window=cfg.census_window,
            aggregation_window=cfg.aggregation_window,
            lr_threshold=cfg.lr_threshold,
        )
        maps.append(compute_disparity(sl, sr, scfg))

    if ens.fuse_at == "smallest":
        fw = min(m.width for m in maps)
        fh = min(m.height for m in maps)
    else:
        fw, fh = w, h
    resampled = [resize_disparity(m, fw, fh) for m in maps]

    acc = np.zeros((fh, fw))
    cnt = np.zeros((fh, fw))
    for m in resampled:
        acc += np.where(m.valid, m.data, 0.0)
        cnt += m.valid
    valid = cnt > 0
    fused_data = np.full((fh, fw), -1.0)
    fused_data[valid] = acc[valid] / cnt[valid]
    fused = FloatMap(fused_data, valid)

    if (fw, fh) != (w, h):
        fused = resize_disparity(fused, w, h)
    return fused


def disparity_to_depth(disp: FloatMap, cam: CameraModel) -> FloatMap:
    """depth = f*B / d for valid pixels, clamped to the depth cap."""
    fb = cam.focal_px * cam.baseline_m
    data = np.full_like(disp.data, -1.0)
    v = disp.valid & (disp.data > 0)
    data[v] = np.minimum(fb / disp.data[v], cam.depth_cap_m)
    return FloatMap(data, v)
