"""Pose geometry, skeleton condition images and joint heatmaps.

Keypoints follow the 17-joint COCO ordering; (x, y) are pixel
coordinates with pixel centers on the integer grid (x = column,
y = row). Rasterization is distance-based (a pixel is covered when its
center lies within the stroke radius of a segment or disc), which makes
renders deterministic and exactly equivariant to integer translations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

JOINT_NAMES = [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
]
N_JOINTS = 17

# 18 limbs: the standard COCO connectivity minus the eye-eye edge.
LIMBS = [
    (15, 13), (13, 11), (16, 14), (14, 12), (11, 12),
    (5, 11), (6, 12), (5, 6),
    (5, 7), (7, 9), (6, 8), (8, 10),
    (0, 1), (0, 2), (1, 3), (2, 4),
    (3, 5), (4, 6),
]

# Frozen rainbow palette, one color per limb (OpenPose-like hues).
# White is reserved for joint discs in condition images.
LIMB_COLORS = [
    (255, 0, 0), (255, 85, 0), (255, 170, 0), (255, 255, 0),
    (170, 255, 0), (85, 255, 0), (0, 255, 0), (0, 255, 85),
    (0, 255, 170), (0, 255, 255), (0, 170, 255), (0, 85, 255),
    (0, 0, 255), (85, 0, 255), (170, 0, 255), (255, 0, 255),
    (255, 0, 170), (255, 0, 85),
]

JOINT_DISC_COLOR = (255, 255, 255)
LIMB_RADIUS = 0.9
JOINT_RADIUS = 1.4


@dataclass
class PersonPose:
    """One person's 2-d keypoints: (17, 2) float pixels + visibility."""

    keypoints: np.ndarray
    visibility: np.ndarray
    bbox: tuple = field(default=None)

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=np.float32).reshape(N_JOINTS, 2)
        self.visibility = np.asarray(self.visibility, dtype=bool).reshape(N_JOINTS)
        if self.bbox is None:
            self.bbox = self.tight_bbox()

    def tight_bbox(self):
        """(x0, y0, x1, y1) of the visible keypoints."""
        vis = self.keypoints[self.visibility]
        if len(vis) == 0:
            return (0.0, 0.0, 0.0, 0.0)
        x0, y0 = vis.min(axis=0)
        x1, y1 = vis.max(axis=0)
        return (float(x0), float(y0), float(x1), float(y1))

    def bbox_area(self):
        x0, y0, x1, y1 = self.bbox
        return max(x1 - x0, 1.0) * max(y1 - y0, 1.0)

    def translated(self, dx, dy):
        return PersonPose(self.keypoints + np.array([dx, dy], dtype=np.float32),
                          self.visibility.copy())


def _grid(canvas):
    h, w = canvas
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(np.float32), ys.astype(np.float32)


def segment_mask(canvas, p0, p1, radius):
    """Boolean mask of pixels within `radius` of the segment p0-p1."""
    xs, ys = _grid(canvas)
    x0, y0 = float(p0[0]), float(p0[1])
    vx, vy = float(p1[0]) - x0, float(p1[1]) - y0
    len2 = vx * vx + vy * vy
    if len2 < 1e-12:
        d2 = (xs - x0) ** 2 + (ys - y0) ** 2
    else:
        t = np.clip(((xs - x0) * vx + (ys - y0) * vy) / len2, 0.0, 1.0)
        d2 = (xs - (x0 + t * vx)) ** 2 + (ys - (y0 + t * vy)) ** 2
    return d2 <= radius * radius


def disc_mask(canvas, center, radius):
    xs, ys = _grid(canvas)
    d2 = (xs - float(center[0])) ** 2 + (ys - float(center[1])) ** 2
    return d2 <= radius * radius


def paint(img, mask, color):
    img[mask] = color


def draw_person_skeleton(img, person, limb_radius=LIMB_RADIUS, joint_radius=JOINT_RADIUS):
    """Colored limbs plus white joint discs for one person (in place)."""
    canvas = img.shape[:2]
    kp, vis = person.keypoints, person.visibility
    for (a, b), color in zip(LIMBS, LIMB_COLORS):
        if vis[a] and vis[b]:
            paint(img, segment_mask(canvas, kp[a], kp[b], limb_radius), color)
    for k in range(N_JOINTS):
        if vis[k]:
            paint(img, disc_mask(canvas, kp[k], joint_radius), JOINT_DISC_COLOR)


def render_skeleton(persons, canvas=(64, 64)):
    """Skeleton condition image: all persons on black, uint8 (H, W, 3).

    Limbs use the fixed per-limb palette; joints are white discs drawn
    on top. Limbs with an invisible endpoint are omitted, as are
    invisible joints.
    """
    img = np.zeros((canvas[0], canvas[1], 3), dtype=np.uint8)
    for person in persons:
        draw_person_skeleton(img, person)
    return img


def _gaussian_channel(canvas, cx, cy, sigma):
    h, w = canvas
    gy = np.exp(-((np.arange(h, dtype=np.float32) - cy) ** 2) / (2.0 * sigma * sigma))
    gx = np.exp(-((np.arange(w, dtype=np.float32) - cx) ** 2) / (2.0 * sigma * sigma))
    return gy[:, None] * gx[None, :]


def render_gt_heatmaps(persons, sigma_px=2.0, canvas=(64, 64), include_center=False):
    """Per-joint Gaussian heatmaps, max-composited over persons.

    Channel k holds exp(-d^2 / (2 sigma^2)) around joint k of every
    person for which that joint is visible; the Gaussian is centered on
    the nearest pixel so each visible joint contributes an exact 1.0
    peak. Values never exceed 1 (max composition, not summation).
    With include_center, an 18th channel marks person centers (mean of
    visible joints) with a wider Gaussian.
    """
    if sigma_px <= 0:
        raise ValueError("sigma_px must be positive")
    k_total = N_JOINTS + (1 if include_center else 0)
    hm = np.zeros((k_total, canvas[0], canvas[1]), dtype=np.float32)
    for person in persons:
        kp, vis = person.keypoints, person.visibility
        for k in range(N_JOINTS):
            if not vis[k]:
                continue
            cx, cy = np.rint(kp[k][0]), np.rint(kp[k][1])
            np.maximum(hm[k], _gaussian_channel(canvas, cx, cy, sigma_px), out=hm[k])
        if include_center and vis.any():
            cx, cy = np.rint(kp[vis].mean(axis=0))
            np.maximum(
                hm[-1],
                _gaussian_channel(canvas, cx, cy, 1.5 * sigma_px),
                out=hm[-1],
            )
    return np.clip(hm, 0.0, 1.0)


def person_center(person):
    """Mean of the visible keypoints (used for grouping and targets)."""
    vis = person.keypoints[person.visibility]
    return vis.mean(axis=0) if len(vis) else np.zeros(2, dtype=np.float32)
