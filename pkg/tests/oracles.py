"""Brute-force set-enumeration versions of the grid metrics."""

import numpy as np


def cells(mask):
    return {(r, c) for r in range(mask.shape[0]) for c in range(mask.shape[1]) if mask[r, c]}


def set_iou(a, b):
    union = a | b
    return 1.0 if not union else len(a & b) / len(union)


def boundary_cells(mask):
    n_rows, n_cols = mask.shape
    out = set()
    for r, c in cells(mask):
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if not (0 <= rr < n_rows and 0 <= cc < n_cols) or not mask[rr, cc]:
                out.add((r, c))
                break
    return out


def dilate_cells(s, tol, shape):
    out = set()
    for r, c in s:
        for dr in range(-tol, tol + 1):
            for dc in range(-tol, tol + 1):
                rr, cc = r + dr, c + dc
                if 0 <= rr < shape[0] and 0 <= cc < shape[1]:
                    out.add((rr, cc))
    return out


def boundary_iou_brute(a, b, tol):
    return set_iou(
        dilate_cells(boundary_cells(a), tol, a.shape),
        dilate_cells(boundary_cells(b), tol, b.shape),
    )


def random_mask(rng, shape=(10, 10)):
    density = rng.uniform(0.05, 0.95)
    return rng.random(shape) < density


def mc_fractions(regions, background, point, r, n, seed=0):
    """Monte-Carlo oracle: uniform samples in the spot disk, last region wins."""
    rng = np.random.default_rng(seed)
    # rejection sampling from the bounding square
    pts = rng.uniform(-r, r, (int(n * 1.3) + 1000, 2))
    pts = pts[(pts**2).sum(axis=1) <= r * r][:n]
    x, y = pts[:, 0] + point[0], pts[:, 1] + point[1]
    names = [background] + [reg.material for reg in regions]
    owner = np.zeros(x.size, dtype=np.intp)
    for k, reg in enumerate(regions, start=1):
        owner[(x - reg.center_mm[0]) ** 2 + (y - reg.center_mm[1]) ** 2 <= reg.radius_mm**2] = k
    counts = np.bincount(owner, minlength=len(names))
    out = {}
    for name, c in zip(names, counts):
        if c:
            out[name] = out.get(name, 0.0) + c / x.size
    return out


__all__ = ["cells", "set_iou", "boundary_cells", "dilate_cells", "boundary_iou_brute", "random_mask", "mc_fractions"]
