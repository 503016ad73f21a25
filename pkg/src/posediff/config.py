"""Flat key-value configuration with documented defaults.

Config files are plain text, one `key = value` per line, `#` comments.
Every key must exist in DEFAULTS (typo protection); values are coerced
to the type of the default. The effective config hashes to a stable
hex digest that checkpoints, stage stamps and reports record.
"""

from __future__ import annotations

import hashlib

# Every tunable in the pipeline, with its default. Values are floats,
# ints, bools, strings, or tuples of numbers (comma separated in files).
DEFAULTS = {
    # dataset generation
    "dataset.canvas": 64,
    "dataset.n_records": 3000,
    "dataset.count_probs": (0.7, 0.2, 0.1),
    "dataset.height_single": (26.0, 44.0),
    "dataset.height_multi": (18.0, 30.0),
    "dataset.jitter": 0.02,
    "dataset.margin": 2,
    "dataset.bg_max_primitives": 3,
    "dataset.filter": False,
    # caption grammar: per-slot inclusion probabilities (optional slots)
    "caption.p_quality_prefix": 0.4,
    "caption.p_medium": 0.5,
    "caption.p_size_adj": 0.3,
    "caption.p_mood_adj": 0.3,
    "caption.p_figure_noun": 0.8,
    "caption.p_setting": 0.4,
    "caption.p_location": 0.5,
    "caption.p_time": 0.35,
    "caption.p_season": 0.3,
    "caption.p_weather": 0.25,
    "caption.p_camera": 0.25,
    "caption.p_lighting": 0.25,
    "caption.p_palette_note": 0.2,
    "caption.p_detail_tag": 0.3,
    "caption.p_quality_suffix": 0.4,
    # human-count filter (uses posenet)
    "filter.person_score_threshold": 0.35,
    "filter.joint_confidence_threshold": 0.2,
    "filter.min_visible_frac": 0.7,
    # autoencoder
    "ae.base_width": 32,
    "ae.latent_channels": 4,
    "ae.steps": 4000,
    "ae.lr": 2e-3,
    "ae.batch": 32,
    # pose estimator
    "posenet.steps": 4000,
    "posenet.lr": 2e-3,
    "posenet.batch": 16,
    "posenet.sigma": 2.0,
    "posenet.center_sigma": 3.0,
    "posenet.center_threshold": 0.3,
    "posenet.joint_threshold": 0.2,
    "posenet.nms_radius": 3,
    "posenet.nominal_scale": 16.0,
    # feature extractor for FID/KID
    "features.steps": 1500,
    "features.lr": 1e-3,
    "features.batch": 32,
    # diffusion
    "sched.T": 200,
    "sched.beta_min": 1e-4,
    "sched.beta_max": 0.1,
    "unet.base_width": 32,
    "unet.mults": (1, 2, 4),
    "unet.res_blocks": 2,
    "unet.time_dim": 64,
    "unet.emb_dim": 128,
    "unet.groups": 8,
    "train.base_steps": 8000,
    "train.ft_steps": 3500,
    "train.lr_base": 1e-4,
    "train.lr_ft": 5e-5,
    "train.weight_decay": 1e-4,
    "train.batch": 16,
    "train.cfg_enabled": False,
    "train.cfg_drop": 0.1,
    "train.log_every": 50,
    # heatmap-weighted loss
    "hg.enabled": False,
    "hg.mode": "encoder",
    "hg.w": 0.05,
    "hg.tau": 0.1,
    "hg.estimator": "posenet",
    "hg.stride": 1,
    "hg.debug_dump": False,
    # sampling
    "sample.steps": 50,
    "sample.sampler": "deterministic",
    "sample.guidance": 1.0,
    # evaluation
    "eval.n_images": 200,
    "eval.batch": 25,
    "metrics.oks_sigma": 0.08,
    "metrics.medium_area_frac": (0.01, 0.10),
    # experiment recipes
    "recipe.seeds": (0, 1, 2),
    "recipe.eval_seed_offset": 1000,
    "recipe.table4_steps": (1500, 3500, 7000),
}


class ConfigError(Exception):
    pass


def _parse_value(raw, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected boolean, got {raw!r}")
    if isinstance(default, tuple):
        parts = [p for p in raw.split(",") if p.strip()]
        elem = default[0] if default else 0.0
        return tuple(int(p) if isinstance(elem, int) else float(p) for p in parts)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


class Config:
    def __init__(self, values=None):
        self._values = dict(DEFAULTS)
        if values:
            for k, v in values.items():
                self.set(k, v)

    def set(self, key, value):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key}")
        if isinstance(value, str) and not isinstance(DEFAULTS[key], str):
            value = _parse_value(value, DEFAULTS[key])
        self._values[key] = value

    def get(self, key):
        if key not in self._values:
            raise ConfigError(f"unknown config key: {key}")
        return self._values[key]

    def __getitem__(self, key):
        return self.get(key)

    def override(self, **pairs):
        """Copy with dotted keys given as keyword args (dots as __)."""
        c = Config()
        c._values = dict(self._values)
        for k, v in pairs.items():
            c.set(k.replace("__", "."), v)
        return c

    def updated(self, pairs):
        c = Config()
        c._values = dict(self._values)
        for k, v in pairs.items():
            c.set(k, v)
        return c

    def canonical(self):
        lines = []
        for k in sorted(self._values):
            v = self._values[k]
            if isinstance(v, tuple):
                s = ",".join(repr(x) for x in v)
            else:
                s = repr(v)
            lines.append(f"{k} = {s}")
        return "\n".join(lines) + "\n"

    def hash(self):
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:16]

    def subset_hash(self, prefixes):
        """Hash over the keys under the given prefixes only.

        Lets a stage stamp depend on just the keys that affect it, so
        unrelated config edits do not invalidate cached artifacts.
        """
        lines = [
            f"{k} = {self._values[k]!r}"
            for k in sorted(self._values)
            if any(k.startswith(p) for p in prefixes)
        ]
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]


def load_config(path):
    """Parse a key = value file on top of the defaults."""
    cfg = Config()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {body!r}")
            key, _, raw = body.partition("=")
            try:
                cfg.set(key.strip(), raw.strip())
            except ConfigError as e:
                raise ConfigError(f"{path}:{lineno}: {e}") from None
    return cfg
