"""Brute-force reference implementations used to freeze expected values.

Everything here is written as literal double/quadruple loops over the
defining sums, with reflective (symmetric) boundary extension done by
explicit index folding, and stays independent of the library's fast paths.
"""

import numpy as np


def reflect_index(i: int, n: int) -> int:
    """Symmetric half-sample reflection: ...2,1,0 | 0,1,..,n-1 | n-1,n-2,..."""
    period = 2 * n
    i = i % period
    if i < 0:
        i += period
    return i if i < n else period - 1 - i


def sample_reflected(field: np.ndarray, y: int, x: int) -> float:
    return field[reflect_index(y, field.shape[0]), reflect_index(x, field.shape[1])]


def conv2d_direct(field: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """out(x) = sum_o W(o) field_reflected(x - o), W centered (2r+1)^2."""
    r = weights.shape[0] // 2
    h, w = field.shape
    out = np.zeros_like(field, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    acc += weights[dy + r, dx + r] * sample_reflected(field, y - dy, x - dx)
            out[y, x] = acc
    return out


def fit_residual_direct(g: np.ndarray, b: np.ndarray, c: float,
                        weights: np.ndarray) -> np.ndarray:
    """e(x) = sum_y K(y - x) (g(x) - b(y) c)^2 with reflective extension."""
    r = weights.shape[0] // 2
    h, w = g.shape
    out = np.zeros_like(g, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    bv = sample_reflected(b, y + dy, x + dx)
                    acc += weights[dy + r, dx + r] * (g[y, x] - bv * c) ** 2
            out[y, x] = acc
    return out


def means_direct(u: np.ndarray, g: np.ndarray, b: np.ndarray,
                 weights: np.ndarray) -> float:
    """c = [sum_x u g (K*b)] / [sum_x u (K*b^2)] via direct convolutions."""
    kb = conv2d_direct(b, weights)
    kb2 = conv2d_direct(b * b, weights)
    return float(np.sum(u * g * kb) / np.sum(u * kb2))


def bias_direct(u_masks: np.ndarray, g: np.ndarray, c: np.ndarray,
                lambdas: np.ndarray, weights: np.ndarray) -> np.ndarray:
    num = np.zeros_like(g, dtype=np.float64)
    den = np.zeros_like(g, dtype=np.float64)
    for i in range(len(c)):
        num += lambdas[i] * c[i] * conv2d_direct(u_masks[i] * g, weights)
        den += lambdas[i] * c[i] * c[i] * conv2d_direct(u_masks[i], weights)
    return num / den


def phi_direct(e_fields: np.ndarray, u_masks: np.ndarray, lambdas: np.ndarray,
               mu: float, time_px: float, weights: np.ndarray) -> np.ndarray:
    n = u_masks.shape[0]
    pref = 2.0 * mu * np.sqrt(np.pi / time_px)
    out = np.empty_like(e_fields)
    for i in range(n):
        acc = np.zeros_like(u_masks[0])
        for j in range(n):
            if j != i:
                acc += conv2d_direct(u_masks[j], weights)
        out[i] = lambdas[i] * e_fields[i] + pref * acc
    return out


def laplacian_direct(field: np.ndarray) -> np.ndarray:
    h, w = field.shape
    out = np.zeros_like(field, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            out[y, x] = (sample_reflected(field, y - 1, x)
                         + sample_reflected(field, y + 1, x)
                         + sample_reflected(field, y, x - 1)
                         + sample_reflected(field, y, x + 1)
                         - 4.0 * field[y, x])
    return out


def biharmonic_direct(field: np.ndarray) -> np.ndarray:
    return laplacian_direct(laplacian_direct(field))


def assemble_implicit_matrix(shape: tuple[int, int], dt: float) -> np.ndarray:
    """Dense A = I + dt * Lap^2, row by row from basis vectors."""
    h, w = shape
    n = h * w
    mat = np.zeros((n, n))
    for k in range(n):
        basis = np.zeros(n)
        basis[k] = 1.0
        mat[:, k] = (basis + dt * biharmonic_direct(basis.reshape(h, w)).ravel())
    return mat
