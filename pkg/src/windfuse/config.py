"""Run configuration with the "paper" and "desk" presets.

Config files are flat ``key = value`` text (see `windfuse.io.parse_config_text`).
Recognized keys::

    profile            paper | desk (applied first, other keys override)
    frame_ms           STFT frame length in ms
    train.num_atoms    atoms per dictionary
    train.lam          sparsity weight, or "auto" for F ** -0.5
    train.n_outer      dictionary-training alternations
    train.n_inner      sparse-coding iterations per alternation
    train.seed
    train.speech_s     seconds of training speech
    train.noise_s      seconds of training wind noise per channel
    enhance.eta        acoustic-channel weight in [0, 1]
    enhance.lam        sparsity weight, or "auto" for F ** -0.5
    enhance.lam_scales comma-separated multipliers of lam for the sweep
    enhance.n_outer    RTF/code alternations
    enhance.n_inner    sparse-coding iterations per alternation
    sim.snrs           comma-separated SNRs in dB
    sim.utterances     utterances per SNR condition
    sim.duration_s     utterance length
    sim.seed           base seed of the test scenarios
    workers            worker processes (capped by WINDFUSE_THREADS)
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

__all__ = ["TrainSettings", "EnhanceSettings", "SimSettings", "RunConfig", "PROFILES", "ConfigError"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainSettings:
    num_atoms: int = 1000
    lam: float | None = None
    n_outer: int = 25
    n_inner: int = 1000
    seed: int = 1000
    speech_s: float = 600.0
    noise_s: float = 120.0


@dataclass(frozen=True)
class EnhanceSettings:
    eta: float = 0.4
    lam: float | None = None
    lam_scales: tuple[float, ...] = (0.1, 1.0, 10.0)
    n_outer: int = 5
    n_inner: int = 1000


@dataclass(frozen=True)
class SimSettings:
    snrs: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0)
    utterances: int = 10
    duration_s: float = 4.0
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    profile: str = "paper"
    frame_ms: float = 32.0
    train: TrainSettings = field(default_factory=TrainSettings)
    enhance: EnhanceSettings = field(default_factory=EnhanceSettings)
    sim: SimSettings = field(default_factory=SimSettings)
    workers: int = 1

    def validate(self) -> "RunConfig":
        t, e, s = self.train, self.enhance, self.sim
        checks = [
            (self.profile in PROFILES, f"unknown profile {self.profile!r}"),
            (self.frame_ms > 0, "frame_ms must be positive"),
            (t.num_atoms >= 1, "train.num_atoms must be >= 1"),
            (t.lam is None or t.lam > 0, "train.lam must be positive"),
            (t.n_outer >= 1 and t.n_inner >= 1, "training iteration counts must be >= 1"),
            (t.speech_s >= 1.0, "train.speech_s must be at least 1 s"),
            (t.noise_s >= 1.0, "train.noise_s must be at least 1 s"),
            (0.0 <= e.eta <= 1.0, "enhance.eta must lie in [0, 1]"),
            (e.lam is None or e.lam > 0, "enhance.lam must be positive"),
            (len(e.lam_scales) >= 1 and all(x > 0 for x in e.lam_scales),
             "enhance.lam_scales must be positive"),
            (e.n_outer >= 1 and e.n_inner >= 1, "enhancement iteration counts must be >= 1"),
            (len(s.snrs) >= 1, "sim.snrs must not be empty"),
            (s.utterances >= 1, "sim.utterances must be >= 1"),
            (s.duration_s >= 1.0, "sim.duration_s must be at least 1 s"),
            (self.workers >= 1, "workers must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def effective_workers(self) -> int:
        cap = os.environ.get("WINDFUSE_THREADS")
        if cap:
            try:
                return max(1, min(self.workers, int(cap)))
            except ValueError:
                raise ConfigError(f"WINDFUSE_THREADS must be an integer, got {cap!r}")
        return self.workers

    @classmethod
    def preset(cls, name: str) -> "RunConfig":
        try:
            return PROFILES[name]
        except KeyError:
            raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")

    def with_overrides(self, values: dict[str, str]) -> "RunConfig":
        """Apply ``key = value`` overrides (see module docstring)."""
        cfg = self
        values = dict(values)
        if "profile" in values:
            cfg = RunConfig.preset(values.pop("profile"))
        for key, raw in values.items():
            section, _, name = key.rpartition(".")
            if section not in ("", "train", "enhance", "sim"):
                raise ConfigError(f"unknown config key {key!r}")
            target = cfg if not section else getattr(cfg, section)
            kinds = {f.name: f for f in fields(target)}
            if name not in kinds or (not section and name in ("train", "enhance", "sim")):
                raise ConfigError(f"unknown config key {key!r}")
            value = _convert(key, raw, getattr(target, name), kinds[name].type)
            target = replace(target, **{name: value})
            cfg = target if not section else replace(cfg, **{section: target})
        return cfg.validate()


def _convert(key, raw: str, current, annotation: str):
    raw = raw.strip()
    try:
        if "tuple" in str(annotation):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if "None" in str(annotation):
            return None if raw.lower() in ("auto", "none", "") else float(raw)
        if isinstance(current, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None


PROFILES = {
    "paper": RunConfig(profile="paper"),
    # desk scale: smaller dictionaries and training sets, shorter inner solves
    "desk": RunConfig(
        profile="desk",
        train=TrainSettings(num_atoms=200, n_inner=200, speech_s=60.0, noise_s=30.0),
        enhance=EnhanceSettings(n_inner=200),
    ),
}
