"""Procedural multi-style stick-figure dataset with poses and captions.

A scene holds 1-3 persons (drawn with probability 0.7/0.2/0.1), each an
instance of one of 24 pose templates placed with random translation,
scale and bounded per-joint jitter, over a style-dependent background
with a few shape primitives. Captions come from a fixed 18-slot grammar
(style, count and action are forced by the scene; decorative slots are
sampled). Everything is a pure function of (seed, config).

Dataset layout on disk:
    <root>/manifest.jsonl
    <root>/img/<id>.ppm       scene image, binary P6
    <root>/skel/<id>.ppm      skeleton condition image, binary P6
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgio, skeleton
from .skeleton import N_JOINTS, PersonPose

# ---------------------------------------------------------------------------
# pose template library
# ---------------------------------------------------------------------------

# Body-frame constants (pelvis at origin, y down, nominal height ~1).
_TORSO_H = 0.30
_HIP_W = 0.14
_SHOULDER_W = 0.24
_UPPER_ARM = 0.16
_FOREARM = 0.15
_THIGH = 0.22
_SHIN = 0.21
_HEAD_RADIUS = 0.085

# name, left arm (shoulder deg, elbow deg), right arm, left leg
# (hip deg, knee deg), right leg. Angles measure outward rotation from
# straight down; the elbow/knee angle is relative to the parent bone.
POSE_TEMPLATES = [
    ("stand", (8, 4), (8, 4), (4, 0), (4, 0)),
    ("t_pose", (88, 0), (88, 0), (10, 0), (10, 0)),
    ("arms_up", (160, 8), (160, 8), (6, 0), (6, 0)),
    ("y_pose", (130, 0), (130, 0), (14, 0), (14, 0)),
    ("wave_left", (145, 50), (12, 6), (5, 0), (5, 0)),
    ("wave_right", (12, 6), (145, 50), (5, 0), (5, 0)),
    ("hands_on_hips", (38, -78), (38, -78), (8, 0), (8, 0)),
    ("left_arm_out", (92, 0), (10, 4), (6, 0), (6, 0)),
    ("right_arm_out", (10, 4), (92, 0), (6, 0), (6, 0)),
    ("wide_stance", (30, 10), (30, 10), (28, 0), (28, 0)),
    ("star_jump", (135, 0), (135, 0), (38, 0), (38, 0)),
    ("walk", (26, 12), (6, 20), (18, 0), (2, 28)),
    ("run", (55, 95), (8, 40), (34, 55), (6, 2)),
    ("lunge_left", (70, 15), (20, 8), (42, 65), (6, 0)),
    ("lunge_right", (20, 8), (70, 15), (6, 0), (42, 65)),
    ("squat", (25, 35), (25, 35), (35, 95), (35, 95)),
    ("kick_left", (45, 5), (30, 8), (78, 10), (4, 0)),
    ("kick_right", (30, 8), (45, 5), (4, 0), (78, 10)),
    ("salute", (10, 4), (120, 115), (5, 0), (5, 0)),
    ("arms_cross_low", (18, -35), (18, -35), (7, 0), (7, 0)),
    ("point_up_left", (170, 0), (15, 5), (9, 0), (9, 0)),
    ("point_up_right", (15, 5), (170, 0), (9, 0), (9, 0)),
    ("flex", (95, 120), (95, 120), (12, 0), (12, 0)),
    ("reach_side", (150, 10), (40, -20), (20, 0), (4, 0)),
]

ACTION_NAMES = [t[0] for t in POSE_TEMPLATES]
N_ACTIONS = len(POSE_TEMPLATES)


def _limb(root, length, theta_deg, side):
    # side +1 = left (joints toward +x), -1 = right
    t = math.radians(theta_deg)
    return (root[0] + side * length * math.sin(t), root[1] + length * math.cos(t))


def template_keypoints(action_id):
    """Body-frame (17, 2) keypoints for one pose template."""
    name, larm, rarm, lleg, rleg = POSE_TEMPLATES[action_id]
    kp = np.zeros((N_JOINTS, 2), dtype=np.float64)
    neck_y = -_TORSO_H
    kp[0] = (0.0, neck_y - 0.12)                      # nose
    kp[1] = (0.035, neck_y - 0.155)                   # left eye
    kp[2] = (-0.035, neck_y - 0.155)                  # right eye
    kp[3] = (0.07, neck_y - 0.13)                     # left ear
    kp[4] = (-0.07, neck_y - 0.13)                    # right ear
    kp[5] = (_SHOULDER_W / 2, neck_y)                 # left shoulder
    kp[6] = (-_SHOULDER_W / 2, neck_y)                # right shoulder
    kp[11] = (_HIP_W / 2, 0.0)                        # left hip
    kp[12] = (-_HIP_W / 2, 0.0)                       # right hip
    for (sh, hip, el, wr, kn, an), (arm, leg), side in [
        ((5, 11, 7, 9, 13, 15), (larm, lleg), +1),
        ((6, 12, 8, 10, 14, 16), (rarm, rleg), -1),
    ]:
        kp[el] = _limb(kp[sh], _UPPER_ARM, arm[0], side)
        kp[wr] = _limb(kp[el], _FOREARM, arm[0] + arm[1], side)
        kp[kn] = _limb(kp[hip], _THIGH, leg[0], side)
        kp[an] = _limb(kp[kn], _SHIN, leg[0] + leg[1], side)
    return kp


# ---------------------------------------------------------------------------
# style vocabulary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Style:
    name: str
    caption_token: str
    line_rgb: tuple
    line_radius: float
    bg_kind: str          # solid | vgrad | hgrad | radial | grid | checker
    bg_rgb0: tuple
    bg_rgb1: tuple
    prim_palette: tuple   # 3 colors for background primitives


STYLES = [
    Style("line-white-on-black", "white line art", (255, 255, 255), 0.8,
          "solid", (0, 0, 0), (0, 0, 0), ((40, 40, 40), (62, 62, 62), (24, 24, 24))),
    Style("line-black-on-white", "black line art", (0, 0, 0), 0.8,
          "solid", (255, 255, 255), (255, 255, 255), ((214, 214, 214), (230, 230, 230), (198, 198, 198))),
    Style("neon-on-navy", "neon sketch", (57, 255, 120), 1.0,
          "vgrad", (8, 12, 40), (18, 26, 74), ((30, 44, 100), (22, 34, 88), (40, 56, 112))),
    Style("crimson-on-sand", "crimson figure study", (165, 28, 48), 1.3,
          "solid", (214, 196, 162), (214, 196, 162), ((196, 176, 140), (226, 210, 180), (184, 166, 134))),
    Style("blueprint", "blueprint plan", (235, 240, 255), 0.7,
          "grid", (25, 60, 120), (45, 85, 150), ((36, 74, 136), (52, 94, 160), (30, 66, 128))),
    Style("chalk-on-slate", "chalk drawing", (226, 226, 216), 1.5,
          "radial", (72, 74, 78), (44, 45, 47), ((92, 94, 98), (58, 60, 63), (104, 106, 110))),
    Style("amber-on-umber", "amber glow print", (255, 170, 40), 1.1,
          "hgrad", (70, 40, 18), (44, 26, 12), ((88, 52, 24), (56, 33, 15), (100, 60, 28))),
    Style("violet-on-mint", "violet pop print", (120, 40, 170), 1.0,
          "checker", (205, 235, 215), (188, 224, 198), ((170, 212, 182), (215, 240, 222), (158, 200, 170))),
]

N_STYLES = len(STYLES)
STYLE_NAMES = [s.name for s in STYLES]


def style_background(style, canvas):
    """Base background field for a style (pure function of coordinates)."""
    h, w = canvas
    c0 = np.array(style.bg_rgb0, dtype=np.float32)
    c1 = np.array(style.bg_rgb1, dtype=np.float32)
    if style.bg_kind == "solid":
        img = np.tile(c0, (h, w, 1))
    elif style.bg_kind == "vgrad":
        t = (np.arange(h, dtype=np.float32) / max(h - 1, 1))[:, None, None]
        img = c0 * (1 - t) + c1 * t
        img = np.broadcast_to(img, (h, w, 3)).copy()
    elif style.bg_kind == "hgrad":
        t = (np.arange(w, dtype=np.float32) / max(w - 1, 1))[None, :, None]
        img = c0 * (1 - t) + c1 * t
        img = np.broadcast_to(img, (h, w, 3)).copy()
    elif style.bg_kind == "radial":
        ys, xs = np.mgrid[0:h, 0:w]
        r = np.sqrt((ys - h / 2) ** 2 + (xs - w / 2) ** 2) / (0.5 * math.hypot(h, w))
        img = c0 * (1 - r[..., None]) + c1 * r[..., None]
    elif style.bg_kind == "grid":
        img = np.tile(c0, (h, w, 1))
        img[::8, :, :] = c1
        img[:, ::8, :] = c1
    elif style.bg_kind == "checker":
        ys, xs = np.mgrid[0:h, 0:w]
        mask = ((ys // 8 + xs // 8) % 2).astype(bool)
        img = np.tile(c0, (h, w, 1))
        img[mask] = c1
    else:
        raise ValueError(f"unknown background kind {style.bg_kind}")
    return np.clip(img, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# caption grammar: 18 slots
# ---------------------------------------------------------------------------

STYLE_TOKENS = tuple(s.caption_token for s in STYLES)
COUNT_TOKENS = ("one", "two", "three")

# (slot_name, vocabulary, kind) where kind is "style"/"count"/"action"
# for scene-forced slots and a config probability key for optional ones.
CAPTION_SLOTS = [
    ("quality_prefix", ("a fine", "a simple", "a rough", "a neat"), "caption.p_quality_prefix"),
    ("style", STYLE_TOKENS, "style"),
    ("medium", ("drawing", "print", "poster", "study"), "caption.p_medium"),
    ("count", COUNT_TOKENS, "count"),
    ("size_adj", ("small", "large", "tiny", "tall"), "caption.p_size_adj"),
    ("mood_adj", ("calm", "lively", "quiet", "bold"), "caption.p_mood_adj"),
    ("figure_noun", ("figure", "person", "character", "dancer"), "caption.p_figure_noun"),
    ("action", tuple(ACTION_NAMES), "action"),
    ("setting", ("outdoors", "indoors", "on stage", "in a yard"), "caption.p_setting"),
    ("location", ("in the park", "at the beach", "on the street", "in a hall",
                  "by the river", "in a field"), "caption.p_location"),
    ("time", ("at dawn", "at noon", "at dusk", "at night"), "caption.p_time"),
    ("season", ("in spring", "in summer", "in autumn", "in winter"), "caption.p_season"),
    ("weather", ("clear sky", "light rain", "snowfall", "fog"), "caption.p_weather"),
    ("camera", ("wide shot", "close up", "side view", "full view"), "caption.p_camera"),
    ("lighting", ("soft light", "hard light", "backlit", "dim light"), "caption.p_lighting"),
    ("palette_note", ("muted colors", "vivid colors", "monochrome", "high contrast"), "caption.p_palette_note"),
    ("detail_tag", ("detailed", "minimal", "textured", "clean lines"), "caption.p_detail_tag"),
    ("quality_suffix", ("high quality", "a masterpiece", "well composed", "best quality"), "caption.p_quality_suffix"),
]

N_SLOTS = len(CAPTION_SLOTS)
SLOT_NAMES = [s[0] for s in CAPTION_SLOTS]
# id 0 is the reserved null token; real tokens are 1 + vocab index
CAPTION_VOCAB_SIZES = [len(s[1]) + 1 for s in CAPTION_SLOTS]


@dataclass
class Caption:
    slots: list          # ordered (slot_name, token) pairs, present slots only
    token_ids: np.ndarray  # (18,) int64; 0 marks an absent slot

    def text(self):
        return " ".join(tok for _, tok in self.slots)


@dataclass
class Scene:
    persons: list
    style_id: int
    action_id: int
    background: list     # (kind, cx, cy, size, shade_idx) primitives
    canvas: tuple = (64, 64)

    @property
    def style(self):
        return STYLES[self.style_id]


@dataclass
class FilterDecision:
    keep: bool
    detected_count: int
    reason: str          # ok | wrong_count | low_integrity


@dataclass
class DatasetRecord:
    id: str
    style: str
    action_id: int
    caption_tokens: list
    persons: list        # PersonPose objects
    image_path: str
    skeleton_path: str


# ---------------------------------------------------------------------------
# scene sampling
# ---------------------------------------------------------------------------


def _record_rng(*key):
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def sample_scene(rng_seed, gen_config):
    """Draw one scene: person count 0.7/0.2/0.1, style, action, layout."""
    rng = np.random.default_rng(int(rng_seed))
    cfg = gen_config
    canvas = (cfg["dataset.canvas"], cfg["dataset.canvas"])
    h_img, w_img = canvas
    margin = cfg["dataset.margin"]
    jitter = cfg["dataset.jitter"]

    count = int(rng.choice([1, 2, 3], p=list(cfg["dataset.count_probs"])))
    style_id = int(rng.integers(N_STYLES))
    action_id = int(rng.integers(N_ACTIONS))

    n_prims = int(rng.integers(0, cfg["dataset.bg_max_primitives"] + 1))
    background = []
    for _ in range(n_prims):
        kind = ["disc", "box", "bar"][int(rng.integers(3))]
        background.append((
            kind,
            float(rng.uniform(0, w_img - 1)),
            float(rng.uniform(0, h_img - 1)),
            float(rng.uniform(4, 16)),
            int(rng.integers(3)),
        ))

    lo, hi = cfg["dataset.height_single"] if count == 1 else cfg["dataset.height_multi"]
    base_kp = template_keypoints(action_id)
    persons = []
    # stratified horizontal slots keep multi-person scenes separable
    slot_w = (w_img - 2 * margin) / count
    for i in range(count):
        height = float(rng.uniform(lo, hi))
        kp = base_kp * height
        pad = jitter * height + margin
        x0, x1 = kp[:, 0].min(), kp[:, 0].max()
        y0, y1 = kp[:, 1].min(), kp[:, 1].max()
        sx_lo = margin + i * slot_w - x0 + pad
        sx_hi = margin + (i + 1) * slot_w - x1 - pad
        if sx_hi <= sx_lo:  # slot narrower than the figure: center it
            tx = margin + (i + 0.5) * slot_w - 0.5 * (x0 + x1)
        else:
            tx = float(rng.uniform(sx_lo, sx_hi))
        ty_lo, ty_hi = pad - y0, h_img - 1 - pad - y1
        ty = float(rng.uniform(min(ty_lo, ty_hi), max(ty_lo, ty_hi)))
        pts = kp + np.array([tx, ty])
        if jitter > 0:
            pts = pts + rng.uniform(-jitter * height, jitter * height, size=pts.shape)
        pts = pts.astype(np.float32)
        visibility = (
            (pts[:, 0] >= 0) & (pts[:, 0] <= w_img - 1)
            & (pts[:, 1] >= 0) & (pts[:, 1] <= h_img - 1)
        )
        persons.append(PersonPose(pts, visibility))
    return Scene(persons, style_id, action_id, background, canvas)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _draw_primitive(img, prim, palette):
    kind, cx, cy, size, shade = prim
    color = palette[shade % len(palette)]
    canvas = img.shape[:2]
    if kind == "disc":
        skeleton.paint(img, skeleton.disc_mask(canvas, (cx, cy), size / 2), color)
    elif kind == "box":
        y0 = max(int(round(cy - size / 2)), 0)
        y1 = min(int(round(cy + size / 2)), canvas[0] - 1)
        x0 = max(int(round(cx - size / 2)), 0)
        x1 = min(int(round(cx + size / 2)), canvas[1] - 1)
        img[y0 : y1 + 1, x0 : x1 + 1] = color
    elif kind == "bar":
        mask = skeleton.segment_mask(canvas, (cx - size, cy), (cx + size, cy), 1.5)
        skeleton.paint(img, mask, color)


def draw_person_styled(img, person, style):
    """Limb segments in the style's line color plus a filled head disc."""
    canvas = img.shape[:2]
    kp, vis = person.keypoints, person.visibility
    for a, b in skeleton.LIMBS:
        if vis[a] and vis[b]:
            mask = skeleton.segment_mask(canvas, kp[a], kp[b], style.line_radius)
            skeleton.paint(img, mask, style.line_rgb)
    if vis[0]:  # head disc anchored at the nose
        ys = kp[:, 1][vis]
        height = max(ys.max() - ys.min(), 8.0)
        mask = skeleton.disc_mask(canvas, kp[0], _HEAD_RADIUS * height / 0.9)
        skeleton.paint(img, mask, style.line_rgb)


def render_scene(scene):
    """Rasterize a scene to uint8 (H, W, 3): background, primitives, persons."""
    style = scene.style
    img = style_background(style, scene.canvas)
    for prim in scene.background:
        _draw_primitive(img, prim, style.prim_palette)
    for person in scene.persons:
        draw_person_styled(img, person, style)
    return img


# ---------------------------------------------------------------------------
# captions
# ---------------------------------------------------------------------------


def compose_caption(scene, rng_seed, gen_config):
    """Fill the 18-slot grammar for a scene.

    Style, count and action are functions of the scene; every other slot
    is included with its configured probability and its token drawn
    uniformly. Each slot appears at most once, in grammar order.
    """
    rng = np.random.default_rng(int(rng_seed))
    slots = []
    token_ids = np.zeros(N_SLOTS, dtype=np.int64)
    forced = {
        "style": scene.style.caption_token,
        "count": COUNT_TOKENS[len(scene.persons) - 1],
        "action": ACTION_NAMES[scene.action_id],
    }
    for i, (name, vocab, kind) in enumerate(CAPTION_SLOTS):
        if kind in ("style", "count", "action"):
            token = forced[kind]
        else:
            # draw both numbers unconditionally so inclusion of one slot
            # never shifts another slot's stream
            u = rng.random()
            j = int(rng.integers(len(vocab)))
            if u >= gen_config[kind]:
                continue
            token = vocab[j]
        slots.append((name, token))
        token_ids[i] = 1 + vocab.index(token)
    return Caption(slots, token_ids)


# ---------------------------------------------------------------------------
# human-count filter
# ---------------------------------------------------------------------------


def filter_record(image_u8, expected_count, posenet_estimator, cfg):
    """GHI-style curation: reject wrong person counts and low integrity.

    detected_count counts decoded poses with person_score above the
    filter threshold; a kept record additionally needs every detected
    pose to have >= min_visible_frac of its joints above the per-joint
    confidence threshold.
    """
    poses = posenet_estimator.estimate(image_u8)
    score_thr = cfg["filter.person_score_threshold"]
    joint_thr = cfg["filter.joint_confidence_threshold"]
    min_frac = cfg["filter.min_visible_frac"]
    detected = [p for p in poses if p.person_score >= score_thr]
    if len(detected) != expected_count:
        return FilterDecision(False, len(detected), "wrong_count")
    for p in detected:
        if float(np.mean(p.joint_scores >= joint_thr)) < min_frac:
            return FilterDecision(False, len(detected), "low_integrity")
    return FilterDecision(True, len(detected), "ok")


# ---------------------------------------------------------------------------
# dataset building and the manifest
# ---------------------------------------------------------------------------


def worker_count():
    """Worker cap from POSEDIFF_THREADS (0 or unset = auto)."""
    raw = os.environ.get("POSEDIFF_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(n, 1)


def record_to_json(rec):
    return {
        "id": rec.id,
        "style": rec.style,
        "action_id": rec.action_id,
        "caption_tokens": [int(t) for t in rec.caption_tokens],
        "persons": [
            {
                "keypoints": [[round(float(x), 3), round(float(y), 3)] for x, y in p.keypoints],
                "visibility": [bool(v) for v in p.visibility],
            }
            for p in rec.persons
        ],
        "image_path": rec.image_path,
        "skeleton_path": rec.skeleton_path,
    }


def record_from_json(obj):
    persons = [
        PersonPose(np.array(p["keypoints"], dtype=np.float32),
                   np.array(p["visibility"], dtype=bool))
        for p in obj["persons"]
    ]
    return DatasetRecord(
        id=obj["id"],
        style=obj["style"],
        action_id=obj["action_id"],
        caption_tokens=obj["caption_tokens"],
        persons=persons,
        image_path=obj["image_path"],
        skeleton_path=obj["skeleton_path"],
    )


class DatasetManifest:
    def __init__(self, root, records):
        self.root = Path(root)
        self.records = records

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def load_image(self, rec):
        return imgio.read_ppm(self.root / rec.image_path)

    def load_skeleton(self, rec):
        return imgio.read_ppm(self.root / rec.skeleton_path)

    @classmethod
    def load(cls, root):
        root = Path(root)
        path = root / "manifest.jsonl"
        if not path.exists():
            raise FileNotFoundError(f"no manifest at {path}")
        records = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    records.append(record_from_json(json.loads(line)))
        return cls(root, records)


def make_record(index, master_seed, gen_config):
    """Build one record in memory: scene, caption, rendered images."""
    scene_seed = int(np.random.SeedSequence([int(master_seed), index, 0]).generate_state(1)[0])
    caption_seed = int(np.random.SeedSequence([int(master_seed), index, 1]).generate_state(1)[0])
    scene = sample_scene(scene_seed, gen_config)
    caption = compose_caption(scene, caption_seed, gen_config)
    image = render_scene(scene)
    skel = skeleton.render_skeleton(scene.persons, scene.canvas)
    rec_id = f"{index:06d}"
    rec = DatasetRecord(
        id=rec_id,
        style=scene.style.name,
        action_id=scene.action_id,
        caption_tokens=[int(t) for t in caption.token_ids],
        persons=scene.persons,
        image_path=f"img/{rec_id}.ppm",
        skeleton_path=f"skel/{rec_id}.ppm",
    )
    return rec, scene, caption, image, skel


def build_dataset(gen_config, n_records, out_dir, master_seed=0, posenet_estimator=None):
    """Generate records, write images + manifest, return the manifest.

    With dataset.filter enabled a trained pose estimator must be
    supplied; records failing filter_record are dropped (the manifest
    then holds <= n_records lines). Generation is parallel over record
    indices; the manifest is written in index order regardless.
    """
    from .errors import UntrainedEstimator

    cfg = gen_config
    use_filter = cfg["dataset.filter"]
    if use_filter and posenet_estimator is None:
        raise UntrainedEstimator("dataset.filter requires a trained pose estimator")
    root = Path(out_dir)
    (root / "img").mkdir(parents=True, exist_ok=True)
    (root / "skel").mkdir(parents=True, exist_ok=True)

    def build_one(i):
        rec, scene, _, image, skel = make_record(i, master_seed, cfg)
        if use_filter:
            decision = filter_record(image, len(scene.persons), posenet_estimator, cfg)
            if not decision.keep:
                return None
        imgio.write_ppm(root / rec.image_path, image)
        imgio.write_ppm(root / rec.skeleton_path, skel)
        return rec

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(build_one, range(n_records)))
    else:
        results = [build_one(i) for i in range(n_records)]

    records = [r for r in results if r is not None]
    with open(root / "manifest.jsonl", "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(record_to_json(rec), sort_keys=True) + "\n")
    return DatasetManifest(root, records)
