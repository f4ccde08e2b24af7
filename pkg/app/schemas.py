from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, field_validator


class _Config(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SegmentConfig(_Config):
    window_s: float = Field(default=5.0, gt=0)
    min_window_s: float = Field(default=1.0, gt=0)
    release_radius_ft: float = Field(default=2.5, gt=0)
    rim_height_ft: float = Field(default=10.0, gt=0)
    clamp_tolerance_ft: float = Field(default=2.0, ge=0)
    frame_rate_hz: float = Field(default=25.0, gt=0)


class FeatureConfig(_Config):
    folds: int = Field(default=5, ge=2)
    smoothing: float = Field(default=10.0, ge=0)
    touch_hysteresis_ft: float = Field(default=1.5, ge=0)


class ForestConfig(_Config):
    n_trees: int = Field(default=500, ge=1)
    # None -> floor(sqrt(p)), resolved at training time once p is known
    mtry: int | None = Field(default=None, ge=1)
    min_leaf: int = Field(default=5, ge=1)
    max_depth: int | None = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    n_jobs: int = Field(default=1, ge=1)


class BorutaConfig(_Config):
    max_runs: int = Field(default=100, ge=10)
    alpha: float = Field(default=0.01, gt=0, lt=0.5)
    n_repeats: int = Field(default=30, ge=1)
    forest: ForestConfig = Field(default_factory=lambda: ForestConfig(n_trees=200))
    seed: int = Field(default=0, ge=0, lt=2**64)


class GbmConfig(_Config):
    n_iters: int = Field(default=300, ge=0)
    learning_rate: float = Field(default=0.05, gt=0, le=1)
    max_depth: int = Field(default=3, ge=1)
    min_leaf: int = Field(default=3, ge=1)
    subsample: float = Field(default=0.8, gt=0, le=1)
    seed: int = Field(default=0, ge=0, lt=2**64)


class PlayerModelConfig(_Config):
    min_attempts: int = Field(default=20, ge=1)
    test_fraction: float = Field(default=0.2, gt=0, lt=1)
    top_k: int = Field(default=10, ge=1)
    gbm: GbmConfig = Field(default_factory=GbmConfig)
    seed: int = Field(default=0, ge=0, lt=2**64)
    n_jobs: int = Field(default=1, ge=1)


MAKE_MODEL_FEATURES = ("ndd_median", "off_hull_area_mean", "ball_path_len", "shot_clock_release")


class MakeModel(_Config):
    intercept: float = -2.6
    weights: dict[str, float] = Field(
        default_factory=lambda: {
            "ndd_median": 0.30,
            "off_hull_area_mean": 0.0008,
            "ball_path_len": 0.01,
            "shot_clock_release": 0.0,
        }
    )

    @field_validator("weights")
    @classmethod
    def _known_features(cls, v: dict[str, float]) -> dict[str, float]:
        unknown = sorted(set(v) - set(MAKE_MODEL_FEATURES))
        if unknown:
            raise ValueError(f"unknown make-model features: {unknown}")
        return {k: float(v.get(k, 0.0)) for k in MAKE_MODEL_FEATURES}


class SynthConfig(_Config):
    n_games: int = Field(default=20, ge=1)
    n_teams: int = Field(default=6, ge=2)
    n_players_per_team: int = Field(default=8, ge=5)
    plays_per_game: int = Field(default=40, ge=1)
    make_model: MakeModel = Field(default_factory=MakeModel)
    skill_sd: float = Field(default=0.3, ge=0)
    skill_overrides: dict[int, float] = Field(default_factory=dict)
    usage_overrides: dict[int, float] = Field(default_factory=dict)
    usage_suppression: dict[int, float] = Field(default_factory=dict)
    usage_boost: dict[int, float] = Field(default_factory=dict)
    # pure-noise columns of generate_planted_table; simulated seasons carry their noise
    # features as the make-model features with zero weight
    noise_features: int = Field(default=6, ge=0)
    jitter_ft: float = Field(default=0.05, ge=0, le=0.5)
    seed: int = Field(default=0, ge=0, lt=2**64)
    n_jobs: int = Field(default=1, ge=1)

    @field_validator("usage_suppression")
    @classmethod
    def _suppression_range(cls, v: dict[int, float]) -> dict[int, float]:
        for pid, factor in v.items():
            if not 0.0 < factor <= 1.0:
                raise ValueError(f"suppression factor for {pid} must be in (0, 1], got {factor}")
        return v

    @field_validator("usage_overrides")
    @classmethod
    def _usage_range(cls, v: dict[int, float]) -> dict[int, float]:
        for pid, usage in v.items():
            if not 0.0 <= usage <= 1.0:
                raise ValueError(f"usage for {pid} must be in [0, 1], got {usage}")
        return v

    @field_validator("usage_boost")
    @classmethod
    def _boost_range(cls, v: dict[int, float]) -> dict[int, float]:
        for pid, factor in v.items():
            if factor < 1.0:
                raise ValueError(f"boost factor for {pid} must be >= 1, got {factor}")
        return v


class VerifyTolerances(_Config):
    # absolute error allowed per feature at the given quantile (1.0 = every play)
    tolerances: dict[str, float] = Field(
        default_factory=lambda: {
            "ndd_median": 0.25,
            "off_hull_area_mean": 8.0,
            "ball_path_len": 1.5,
            "shooter_path_len": 1.0,
            "shot_dist": 0.25,
            "shot_clock_release": 0.05,
            "game_clock_release": 0.05,
        }
    )
    quantile: float = Field(default=1.0, gt=0, le=1)


class RunConfig(_Config):
    command: str
    seed: int = Field(default=0, ge=0, lt=2**64)
    out_dir: str = "data/out"
    threads: int = Field(default=1, ge=1)
    deterministic: bool = False
    log_level: str = "INFO"
    segment: SegmentConfig = Field(default_factory=SegmentConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    boruta: BorutaConfig = Field(default_factory=BorutaConfig)
    player_model: PlayerModelConfig = Field(default_factory=PlayerModelConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    verify: VerifyTolerances = Field(default_factory=VerifyTolerances)
