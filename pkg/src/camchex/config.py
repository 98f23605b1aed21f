"""Architecture, training and ablation configuration.

Two architecture presets exist: ``desk`` (the default; small enough that the
full pipeline trains on a laptop CPU in minutes) and ``paper`` (records the
full-scale dimensions for interface parity; no desk-scale guarantees are made
for it).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path


@dataclass(frozen=True)
class ModelConfig:
    resolution: int = 64
    in_channels: int = 1
    stage_channels: tuple[int, ...] = (8, 16, 32)  # one stride-2 downsample per stage
    reduction_stride: int = 2                      # shared conv, feature map -> fused map
    text_dim: int = 32
    text_layers: int = 2
    text_heads: int = 4
    max_text_tokens: int = 64
    fusion_layers: int = 2
    fusion_heads: int = 4
    num_classes: int = 26
    view_cap: int = 4

    @property
    def channels(self) -> int:
        """Feature channels produced by the image encoders."""
        return self.stage_channels[-1]

    @property
    def total_stride(self) -> int:
        return 2 ** len(self.stage_channels)

    @property
    def feature_size(self) -> int:
        """Spatial side of the encoder output maps."""
        if self.resolution % self.total_stride != 0:
            raise ValueError(
                f"resolution {self.resolution} not divisible by total stride {self.total_stride}"
            )
        return self.resolution // self.total_stride

    @property
    def fused_size(self) -> int:
        """Spatial side of the reduced maps entering the fusion transformer."""
        if self.feature_size % self.reduction_stride != 0:
            raise ValueError(
                f"feature size {self.feature_size} not divisible by reduction stride"
                f" {self.reduction_stride}"
            )
        return self.feature_size // self.reduction_stride

    @property
    def tokens_per_block(self) -> int:
        return self.fused_size * self.fused_size

    @property
    def max_fusion_tokens(self) -> int:
        return (self.view_cap + 2) * self.tokens_per_block


@dataclass(frozen=True)
class ASLConfig:
    """Asymmetric-loss hyperparameters; zeros reduce it to plain BCE."""

    gamma_pos: float = 0.0
    gamma_neg: float = 4.0
    margin: float = 0.05

    def __post_init__(self) -> None:
        if self.gamma_pos < 0 or self.gamma_neg < 0:
            raise ValueError("focusing exponents must be >= 0")
        if not (0.0 <= self.margin < 1.0):
            raise ValueError("margin must lie in [0, 1)")


@dataclass(frozen=True)
class NoiseConfig:
    """Input noise applied to student trainings in the self-training loop."""

    enabled: bool = False
    hflip_prob: float = 0.5
    pixel_jitter: float = 0.02
    feature_dropout: float = 0.1


@dataclass(frozen=True)
class AblationFlags:
    """Which modalities the study-level model consumes.

    Disabled modalities are dropped from the fused sequence entirely; an
    *enabled* text modality that is missing for a particular study is instead
    represented by its learned placeholder block.
    """

    single_view: bool = False
    multi_view: bool = True
    use_ci: bool = True
    use_vs: bool = True

    def __post_init__(self) -> None:
        if self.single_view and self.multi_view:
            raise ValueError("single_view and multi_view are mutually exclusive")
        if not (self.uses_images or self.use_ci or self.use_vs):
            raise ValueError("at least one modality must be enabled")

    @property
    def uses_images(self) -> bool:
        return self.single_view or self.multi_view


#: Named ablation presets; each mirrors one row of the modality study.
ABLATION_PRESETS: dict[str, AblationFlags] = {
    "single_view": AblationFlags(single_view=True, multi_view=False, use_ci=False, use_vs=False),
    "ci_only": AblationFlags(single_view=False, multi_view=False, use_ci=True, use_vs=False),
    "vs_only": AblationFlags(single_view=False, multi_view=False, use_ci=False, use_vs=True),
    "multi_view": AblationFlags(single_view=False, multi_view=True, use_ci=False, use_vs=False),
    "mv_ci": AblationFlags(single_view=False, multi_view=True, use_ci=True, use_vs=False),
    "full": AblationFlags(),
}


@dataclass(frozen=True)
class TrainConfig:
    peak_lr: float = 3e-5
    weight_decay: float = 1e-4
    batch_size: int = 8
    warmup_fraction: float = 0.05
    epochs: int = 10
    total_steps: int | None = None  # overrides epochs-derived step count when set
    ema_decay: float = 0.999
    ns_iterations: int = 4
    view_cap: int = 4
    stage2_freeze_encoders: bool = False
    weight_scheme: str = "inverse_prevalence"  # or "uniform"
    seed: int = 0
    log_every: int = 1  # epochs between metric evaluations
    stop_at_train_map: float | None = None  # early-exit threshold; None keeps total_steps exact
    asl: ASLConfig = field(default_factory=ASLConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self) -> None:
        if not (0.0 < self.warmup_fraction < 1.0):
            raise ValueError("warmup_fraction must lie in (0, 1)")
        if self.ns_iterations < 1:
            raise ValueError("ns_iterations must be >= 1")
        if self.weight_scheme not in ("uniform", "inverse_prevalence"):
            raise ValueError(f"unknown weight scheme: {self.weight_scheme}")


DESK_MODEL = ModelConfig()

# Full-scale dimensions, recorded for interface parity only.
PAPER_MODEL = ModelConfig(
    resolution=1024,
    in_channels=3,
    stage_channels=(96, 192, 384, 768),
    reduction_stride=2,
    text_dim=768,
    text_layers=12,
    text_heads=12,
    max_text_tokens=512,
    fusion_layers=4,
    fusion_heads=8,
    num_classes=26,
    view_cap=4,
)

MODEL_PRESETS = {"desk": DESK_MODEL, "paper": PAPER_MODEL}

DESK_TRAIN = TrainConfig()
PAPER_TRAIN = TrainConfig(batch_size=16)

TRAIN_PRESETS = {"desk": DESK_TRAIN, "paper": PAPER_TRAIN}


@dataclass(frozen=True)
class RunConfig:
    """Everything a training command needs, serializable to a JSON file."""

    preset: str = "desk"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "RunConfig":
        raw = json.loads(text)
        return RunConfig(
            preset=raw.get("preset", "desk"),
            model=_model_from_dict(raw.get("model", {}), raw.get("preset", "desk")),
            train=_train_from_dict(raw.get("train", {}), raw.get("preset", "desk")),
            ablation=AblationFlags(**raw.get("ablation", {})),
        )

    @staticmethod
    def load(path: str | Path) -> "RunConfig":
        return RunConfig.from_json(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def _model_from_dict(raw: dict, preset: str) -> ModelConfig:
    base = MODEL_PRESETS.get(preset)
    if base is None:
        raise ValueError(f"unknown preset: {preset!r}")
    raw = dict(raw)
    if "stage_channels" in raw:
        raw["stage_channels"] = tuple(raw["stage_channels"])
    return replace(base, **raw)


def _train_from_dict(raw: dict, preset: str) -> TrainConfig:
    base = TRAIN_PRESETS.get(preset)
    if base is None:
        raise ValueError(f"unknown preset: {preset!r}")
    raw = dict(raw)
    if "asl" in raw:
        raw["asl"] = ASLConfig(**raw["asl"])
    if "noise" in raw:
        raw["noise"] = NoiseConfig(**raw["noise"])
    return replace(base, **raw)
