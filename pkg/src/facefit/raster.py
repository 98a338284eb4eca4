"""Soft (differentiable) and hard (oracle) rasterization plus compositing.

The soft rasterizer follows the sigmoid-silhouette / softmax-depth
formulation: per pixel i and triangle j the coverage probability is
``D_ij = sigmoid(s_ij * d2_ij / sigma)`` with d2 the squared distance to
the nearest triangle edge in normalized device coordinates and s = +1
inside / -1 outside; colors are aggregated with depth-softmax weights that
include a background term.  Every output value is a smooth function of
vertex positions and colors, so gradients flow from pixels to parameters.

Pixels are paired only with triangles whose NDC bounding box (inflated by
3*sqrt(sigma)) contains them; far triangles contribute exactly zero by
definition, which keeps the cost O(T * covered area).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import DimensionMismatchError, FittingDomainError
from .morphable import DTYPE, _t


@dataclass
class RenderConfig:
    width: int = 224
    height: int = 224
    sigma: float = 1e-4        # silhouette softness, NDC units squared
    gamma_agg: float = 1e-4    # depth-softmax temperature
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    z_near: float = 1.0        # depth normalization scale for aggregation

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("render size must be positive")
        if self.sigma <= 0 or self.gamma_agg <= 0:
            raise ValueError("sigma and gamma_agg must be positive")
        self.background = np.asarray(self.background, dtype=np.float64)
        if self.background.shape not in ((3,), (self.height, self.width, 3)):
            raise DimensionMismatchError(
                "background must be an RGB triple or an HxWx3 image")


@dataclass
class RenderOutput:
    """rgb in [0,1], alpha = face coverage, mask = photometric-loss region."""

    rgb: torch.Tensor    # (H, W, 3)
    alpha: torch.Tensor  # (H, W)
    mask: torch.Tensor   # (H, W), alpha modulated by interpolated skin weights

    def numpy(self):
        return (self.rgb.detach().numpy(), self.alpha.detach().numpy(),
                self.mask.detach().numpy())


def _background_image(config: RenderConfig) -> torch.Tensor:
    bg = _t(config.background)
    if bg.ndim == 1:
        bg = bg.reshape(1, 1, 3).expand(config.height, config.width, 3)
    return bg


def _ndc_grid(config: RenderConfig):
    """Pixel-center NDC coordinates; x right, y up (row 0 is y near +1)."""
    w, h = config.width, config.height
    xs = (2.0 * (np.arange(w) + 0.5) / w) - 1.0
    ys = 1.0 - (2.0 * (np.arange(h) + 0.5) / h)
    return xs, ys


def _pair_tables(verts_ndc: np.ndarray, tris: np.ndarray, config: RenderConfig):
    """(triangle, pixel) index pairs for pixels inside inflated NDC bboxes."""
    w, h = config.width, config.height
    pad = 3.0 * math.sqrt(config.sigma)
    tv = verts_ndc[tris]                      # (T, 3, 2)
    lo = tv.min(axis=1) - pad
    hi = tv.max(axis=1) + pad
    # pixel-center coordinate of column i is 2(i+0.5)/W - 1 (x), rows mirror in y
    i_lo = np.maximum(0, np.ceil((lo[:, 0] + 1.0) * w / 2.0 - 0.5)).astype(np.int64)
    i_hi = np.minimum(w - 1, np.floor((hi[:, 0] + 1.0) * w / 2.0 - 0.5)).astype(np.int64)
    k_lo = np.maximum(0, np.ceil((1.0 - hi[:, 1]) * h / 2.0 - 0.5)).astype(np.int64)
    k_hi = np.minimum(h - 1, np.floor((1.0 - lo[:, 1]) * h / 2.0 - 0.5)).astype(np.int64)
    cols = np.maximum(0, i_hi - i_lo + 1)
    rows = np.maximum(0, k_hi - k_lo + 1)
    counts = cols * rows
    total = int(counts.sum())
    if total == 0:
        return (np.empty(0, np.int64),) * 2
    tri_idx = np.repeat(np.arange(len(tris)), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(total) - np.repeat(starts, counts)
    width_per = cols[tri_idx]
    row = k_lo[tri_idx] + local // width_per
    col = i_lo[tri_idx] + local % width_per
    return tri_idx, row * w + col


def _edge_distance_sq(px, a, b, c, sigma):
    """Smoothed min squared distance from points to the three edge segments.

    The endpoint clamp and the three-way min are C2-smoothed (softplus and
    log-sum-exp) so downstream gradients have no curvature jumps at segment
    endpoints or on the medial axis; away from those loci the result equals
    the exact distance at float64 precision.
    """
    tau = 1e-3
    dists = []
    for p, q in ((a, b), (b, c), (c, a)):
        pq = q - p
        den = (pq * pq).sum(dim=1).clamp_min(1e-300)
        t = ((px - p) * pq).sum(dim=1) / den
        t = tau * torch.nn.functional.softplus(t / tau)
        t = 1.0 - tau * torch.nn.functional.softplus((1.0 - t) / tau)
        proj = p + t.unsqueeze(1) * pq
        dists.append(((px - proj) ** 2).sum(dim=1))
    kappa = 1e-2 * sigma
    return -kappa * torch.logsumexp(-torch.stack(dists, dim=1) / kappa, dim=1)


def rasterize_soft(projected, colors, skin_weights, triangles,
                   config: RenderConfig, debug: dict | None = None) -> RenderOutput:
    """Differentiable rasterization of a projected, per-vertex-colored mesh.

    projected: (V, 3) pixel-space (u, v, depth) with depth > 0.
    If `debug` is a dict it receives per-pixel aggregation diagnostics.
    """
    proj = _t(projected)
    cols = _t(colors)
    sw = _t(skin_weights).reshape(-1)
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    h, w = config.height, config.width
    bg_img = _background_image(config)

    if tris.shape[0] == 0 or proj.shape[0] == 0:
        zero = torch.zeros((h, w), dtype=DTYPE)
        return RenderOutput(rgb=bg_img.clone(), alpha=zero, mask=zero.clone())

    if float(proj[:, 2].detach().min()) <= 0.0:
        raise FittingDomainError("non-positive depth in rasterize_soft")
    if cols.shape[0] != proj.shape[0] or sw.shape[0] != proj.shape[0]:
        raise DimensionMismatchError("colors/skin_weights disagree with vertex count")

    # pixel (u, v) -> NDC, y up
    ndc = torch.stack([2.0 * proj[:, 0] / w - 1.0,
                       1.0 - 2.0 * proj[:, 1] / h], dim=1)
    depth = proj[:, 2]

    tri_idx_np, pix_idx_np = _pair_tables(ndc.detach().numpy(), tris, config)
    if len(tri_idx_np) == 0:
        zero = torch.zeros((h, w), dtype=DTYPE)
        return RenderOutput(rgb=bg_img.clone(), alpha=zero, mask=zero.clone())
    tri_idx = torch.as_tensor(tri_idx_np)
    pix_idx = torch.as_tensor(pix_idx_np)

    xs, ys = _ndc_grid(config)
    px_x = torch.as_tensor(xs, dtype=DTYPE)[pix_idx % w]
    px_y = torch.as_tensor(ys, dtype=DTYPE)[pix_idx // w]
    px = torch.stack([px_x, px_y], dim=1)

    tv = torch.as_tensor(tris)[tri_idx]           # (P, 3)
    a, b, c = ndc[tv[:, 0]], ndc[tv[:, 1]], ndc[tv[:, 2]]

    def cross2(o, p, q):
        return (p[:, 0] - o[:, 0]) * (q[:, 1] - o[:, 1]) - \
               (p[:, 1] - o[:, 1]) * (q[:, 0] - o[:, 0])

    area2 = cross2(a, b, c)
    w_a = cross2(px, b, c)
    w_b = cross2(px, c, a)
    w_c = cross2(px, a, b)
    # inside iff all sub-areas share the triangle's orientation
    s_area = torch.sign(area2)
    inside = ((w_a * s_area >= 0) & (w_b * s_area >= 0) & (w_c * s_area >= 0))
    sign = torch.where(inside, 1.0, -1.0)

    d2 = _edge_distance_sq(px, a, b, c, config.sigma)

    # the bbox pre-filter is rectangular; enforce the actual contract here:
    # outside pixels farther than 3*sqrt(sigma) from every edge contribute
    # exactly zero
    keep = inside | (d2 < 9.0 * config.sigma)
    if not bool(keep.all()):
        pix_idx = pix_idx[keep]
        tv = tv[keep]
        sign = sign[keep]
        d2 = d2[keep]
        w_a, w_b, w_c = w_a[keep], w_b[keep], w_c[keep]
        area2 = area2[keep]

    # outside pixels fade through a C2 smootherstep window that reaches zero
    # flat at the truncation radius, so truncation introduces no value,
    # gradient, or curvature discontinuities
    t = ((9.0 * config.sigma - d2) / (5.0 * config.sigma)).clamp(0.0, 1.0)
    window = torch.where(sign > 0, torch.ones_like(t),
                         t * t * t * (t * (6.0 * t - 15.0) + 10.0))
    cover = torch.sigmoid(sign * d2 / config.sigma) * window

    # clipped barycentrics for interpolation; the clip is softplus-smoothed
    # (exact away from zero at float64 precision) so extrapolated pixels do
    # not put gradient kinks into the depth and color interpolants
    denom = torch.where(area2.abs() < 1e-300, torch.full_like(area2, 1e-300), area2)
    bary = torch.stack([w_a, w_b, w_c], dim=1) / denom.unsqueeze(1)
    tau = 1e-3
    bary = tau * torch.nn.functional.softplus(bary / tau)
    bary = bary / bary.sum(dim=1, keepdim=True).clamp_min(1e-12)

    z_vert = depth[tv]                             # (P, 3)
    z_score = config.z_near * (bary / z_vert).sum(dim=1)  # inverse-depth weighted
    col_vert = cols[tv]                            # (P, 3, 3)
    pair_color = (bary.unsqueeze(2) * col_vert).sum(dim=1)
    pair_skin = (bary * sw[tv]).sum(dim=1)

    # depth-softmax aggregation, D_ij * exp(z_ij / gamma), done in log space
    # and stabilized by the per-pixel max exponent so extreme sharpness
    # underflows gracefully instead of producing 0/0
    log_cover = torch.log(cover.clamp_min(1e-300))
    expo = z_score / config.gamma_agg + log_cover
    m = torch.zeros(h * w, dtype=DTYPE)  # background score is exp(0 / gamma)
    m = m.scatter_reduce(0, pix_idx, expo.detach(), reduce="amax")
    num = torch.exp(expo - m[pix_idx])

    num_sum = torch.zeros(h * w, dtype=DTYPE).index_add(0, pix_idx, num)
    bg_w = torch.exp(-m)
    total = num_sum + bg_w
    rgb_fg = torch.zeros((h * w, 3), dtype=DTYPE).index_add(
        0, pix_idx, num.unsqueeze(1) * pair_color)
    rgb = (rgb_fg + bg_w.unsqueeze(1) * bg_img.reshape(-1, 3)) / total.unsqueeze(1)
    rgb = rgb.reshape(h, w, 3).clamp(0.0, 1.0)

    # coverage: 1 - prod(1 - D); D capped below 1 so the log stays finite
    log_miss = torch.log1p(-cover * (1.0 - 1e-12))
    alpha = 1.0 - torch.exp(torch.zeros(h * w, dtype=DTYPE).index_add(0, pix_idx, log_miss))
    skin_num = torch.zeros(h * w, dtype=DTYPE).index_add(0, pix_idx, num * pair_skin)
    skin_avg = skin_num / num_sum.clamp_min(1e-300)
    mask = (alpha * skin_avg).clamp(0.0, 1.0)

    if debug is not None:
        weight_sum = (num_sum + bg_w) / total
        debug["weight_sum"] = weight_sum.reshape(h, w).detach().numpy()
        debug["foreground_weight"] = (num_sum / total).reshape(h, w).detach().numpy()
        debug["pair_count"] = len(tri_idx_np)
    return RenderOutput(rgb=rgb, alpha=alpha.reshape(h, w), mask=mask.reshape(h, w))


def rasterize_hard(projected, colors, triangles, config: RenderConfig,
                   skin_weights=None) -> RenderOutput:
    """Classic z-buffered rasterization at pixel centers (numpy, no gradients)."""
    proj = np.asarray(projected, dtype=np.float64)
    cols = np.asarray(colors, dtype=np.float64)
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    h, w = config.height, config.width
    if proj.size and proj[:, 2].min() <= 0:
        raise FittingDomainError("non-positive depth in rasterize_hard")
    sw = (np.ones(proj.shape[0]) if skin_weights is None
          else np.asarray(skin_weights, dtype=np.float64).reshape(-1))

    rgb = _background_image(config).numpy().copy()
    alpha = np.zeros((h, w))
    mask = np.zeros((h, w))
    zbuf = np.full((h, w), np.inf)

    for t in tris:
        pa, pb, pc = proj[t[0], :2], proj[t[1], :2], proj[t[2], :2]
        za, zb, zc = proj[t[0], 2], proj[t[1], 2], proj[t[2], 2]
        area = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])
        if area == 0.0:
            continue
        lo_u = max(0, int(math.ceil(min(pa[0], pb[0], pc[0]) - 0.5)))
        hi_u = min(w - 1, int(math.floor(max(pa[0], pb[0], pc[0]) - 0.5)) + 1)
        lo_v = max(0, int(math.ceil(min(pa[1], pb[1], pc[1]) - 0.5)))
        hi_v = min(h - 1, int(math.floor(max(pa[1], pb[1], pc[1]) - 0.5)) + 1)
        for row in range(lo_v, hi_v + 1):
            for col in range(lo_u, hi_u + 1):
                p = (col + 0.5, row + 0.5)
                wa = ((pb[0] - p[0]) * (pc[1] - p[1]) - (pb[1] - p[1]) * (pc[0] - p[0])) / area
                wb = ((pc[0] - p[0]) * (pa[1] - p[1]) - (pc[1] - p[1]) * (pa[0] - p[0])) / area
                wc = 1.0 - wa - wb
                if wa < 0 or wb < 0 or wc < 0:
                    continue
                z = wa * za + wb * zb + wc * zc
                if z < zbuf[row, col]:
                    zbuf[row, col] = z
                    rgb[row, col] = wa * cols[t[0]] + wb * cols[t[1]] + wc * cols[t[2]]
                    alpha[row, col] = 1.0
                    mask[row, col] = wa * sw[t[0]] + wb * sw[t[1]] + wc * sw[t[2]]
    return RenderOutput(rgb=torch.as_tensor(np.clip(rgb, 0.0, 1.0)),
                        alpha=torch.as_tensor(alpha),
                        mask=torch.as_tensor(np.clip(mask, 0.0, 1.0)))


def composite(render: RenderOutput, source) -> torch.Tensor:
    """Blend the rendered face over the source photo: a*rgb + (1-a)*source."""
    src = _t(source)
    if src.shape != render.rgb.shape:
        raise DimensionMismatchError(
            f"source shape {tuple(src.shape)} != render shape {tuple(render.rgb.shape)}")
    a = render.alpha.unsqueeze(-1)
    return a * render.rgb + (1.0 - a) * src
