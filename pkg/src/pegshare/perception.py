"""Goal localization from scene keypoints.

A seeded synthetic keypoint generator stands in for an off-the-shelf image
feature detector; the substance here is GMM clustering of the scattered
points and the planar board transform that lifts image detections into
world-frame goal candidates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateGeometryError, InsufficientDataError


@dataclass
class KeypointSet:
    points: np.ndarray  # (n, 2) pixels
    source: str = "synthetic"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ConfigError("keypoints must be (n, 2)")

    def __len__(self):
        return len(self.points)


@dataclass
class GmmConfig:
    max_iter: int = 200
    tol: float = 1e-8
    cov_floor: float = 1.0  # px^2
    seed: int = 0


@dataclass
class GmmModel:
    weights: np.ndarray           # (K,)
    means: np.ndarray             # (K, 2)
    covariances: np.ndarray       # (K, 2, 2)
    log_likelihood_history: list

    @property
    def n_components(self) -> int:
        return len(self.weights)


@dataclass
class PlanarTransform:
    """Homography from image pixels to board millimeters, H33 = 1."""

    H: np.ndarray
    board_plane_height: float = 0.0

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        if self.H.shape != (3, 3):
            raise ConfigError("homography must be 3x3")
        if abs(np.linalg.det(self.H)) < 1e-12:
            raise ConfigError("homography must be invertible")


def generate_keypoints(site_pixels, per_site=30, noise_px=2.0, clutter=0,
                       image_size=(640, 480), seed=0) -> KeypointSet:
    """Gaussian point cloud around each projected site plus uniform clutter.

    Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    site_pixels = np.asarray(site_pixels, dtype=float)
    pts = []
    for px in site_pixels:
        pts.append(px[None, :] + rng.normal(0.0, noise_px, (per_site, 2)))
    if clutter:
        w, h = image_size
        pts.append(np.stack([rng.uniform(0, w, clutter),
                             rng.uniform(0, h, clutter)], axis=1))
    return KeypointSet(np.concatenate(pts, axis=0))


def _log_gauss(points, mean, cov):
    d = points - mean
    inv = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    quad = np.einsum("ni,ij,nj->n", d, inv, d)
    return -0.5 * (quad + logdet + 2.0 * np.log(2.0 * np.pi))


def _floor_cov(cov, floor):
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def _kmeanspp_init(points, K, rng):
    n = len(points)
    centers = [points[rng.integers(n)]]
    for _ in range(1, K):
        d2 = np.min(((points[:, None, :] - np.array(centers)[None, :, :]) ** 2)
                    .sum(axis=2), axis=1)
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centers.append(points[rng.choice(n, p=probs)])
    return np.array(centers)


def gmm_fit(points, K: int, cfg: GmmConfig | None = None) -> GmmModel:
    """EM with k-means++ style seeding and covariance eigenvalue flooring."""
    cfg = cfg or GmmConfig()
    if isinstance(points, KeypointSet):
        X = points.points
    else:
        X = np.asarray(points, dtype=float)
    n = len(X)
    if n < K:
        raise InsufficientDataError("need at least K points for K components")

    rng = np.random.default_rng(cfg.seed)
    means = _kmeanspp_init(X, K, rng)
    covariances = np.array([_floor_cov(np.cov(X.T) if n > 1 else np.eye(2),
                                       cfg.cov_floor)] * K)
    weights = np.full(K, 1.0 / K)

    history = []
    prev_ll = -np.inf
    for _ in range(cfg.max_iter):
        # E step
        logp = np.stack([np.log(weights[k]) + _log_gauss(X, means[k], covariances[k])
                         for k in range(K)], axis=1)
        m = logp.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(logp - m).sum(axis=1))
        ll = float(lse.sum())
        history.append(ll)
        resp = np.exp(logp - lse[:, None])
        if ll - prev_ll < cfg.tol and np.isfinite(prev_ll):
            break
        prev_ll = ll
        # M step
        nk = resp.sum(axis=0)
        weights = nk / n
        means = (resp.T @ X) / nk[:, None]
        for k in range(K):
            d = X - means[k]
            cov = (resp[:, k][:, None] * d).T @ d / nk[k]
            covariances[k] = _floor_cov(cov, cfg.cov_floor)
    return GmmModel(weights=weights, means=means, covariances=covariances,
                    log_likelihood_history=history)


def cluster_centers(model: GmmModel):
    """Means ordered by decreasing weight; equal weights tie-break by x."""
    order = np.lexsort((model.means[:, 0], -model.weights))
    return model.means[order].copy()


def estimate_board_homography(pixel_pts, board_pts) -> tuple:
    """Normalized DLT homography fit from >= 4 pixel/board-mm pairs.

    Returns (PlanarTransform, reprojection RMSE in pixels... board mm).
    """
    pixel_pts = np.asarray(pixel_pts, dtype=float)
    board_pts = np.asarray(board_pts, dtype=float)
    if pixel_pts.shape != board_pts.shape or pixel_pts.ndim != 2 \
            or pixel_pts.shape[1] != 2 or len(pixel_pts) < 4:
        raise DegenerateGeometryError("need >= 4 pixel/board correspondences")

    def normalizer(pts):
        c = pts.mean(axis=0)
        scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(pts - c, axis=1)), 1e-12)
        T = np.array([[scale, 0, -scale * c[0]],
                      [0, scale, -scale * c[1]],
                      [0, 0, 1.0]])
        return T

    Tp = normalizer(pixel_pts)
    Tb = normalizer(board_pts)
    ph = np.concatenate([pixel_pts, np.ones((len(pixel_pts), 1))], axis=1) @ Tp.T
    bh = np.concatenate([board_pts, np.ones((len(board_pts), 1))], axis=1) @ Tb.T

    A = []
    for (x, y, _), (u, v, _) in zip(ph, bh):
        A.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        A.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    A = np.asarray(A)
    _, s, Vt = np.linalg.svd(A)
    if s[-2] < 1e-10 * s[0]:
        raise DegenerateGeometryError("rank-deficient correspondence configuration")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Tb) @ Hn @ Tp
    if abs(H[2, 2]) < 1e-12:
        raise DegenerateGeometryError("degenerate homography normalization")
    H = H / H[2, 2]

    proj = np.concatenate([pixel_pts, np.ones((len(pixel_pts), 1))], axis=1) @ H.T
    proj = proj[:, :2] / proj[:, 2:3]
    rmse = float(np.sqrt(((proj - board_pts) ** 2).sum(axis=1).mean()))
    return PlanarTransform(H), rmse


def image_to_world(tf: PlanarTransform, pixel):
    """Lift an image point to a world 3-vector on the board plane (meters)."""
    pixel = np.asarray(pixel, dtype=float)
    v = tf.H @ np.array([pixel[0], pixel[1], 1.0])
    if abs(v[2]) < 1e-9:
        raise DegenerateGeometryError("point maps to infinity")
    board_mm = v[:2] / v[2]
    return np.array([board_mm[0] / 1000.0, board_mm[1] / 1000.0,
                     tf.board_plane_height])


def world_to_image(tf: PlanarTransform, world):
    """Inverse of image_to_world for points on the board plane."""
    world = np.asarray(world, dtype=float)
    Hinv = np.linalg.inv(tf.H)
    v = Hinv @ np.array([world[0] * 1000.0, world[1] * 1000.0, 1.0])
    if abs(v[2]) < 1e-9:
        raise DegenerateGeometryError("point maps to infinity")
    return v[:2] / v[2]


def select_goal(centers_world, nominal_target):
    """Center nearest the phase's nominal target; ties by lowest index."""
    centers_world = np.asarray(centers_world, dtype=float)
    if centers_world.ndim != 2 or len(centers_world) == 0:
        raise InsufficientDataError("need at least one candidate center")
    nominal_target = np.asarray(nominal_target, dtype=float)
    d = np.linalg.norm(centers_world - nominal_target, axis=1)
    return centers_world[int(np.argmin(d))].copy()
