from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from dotenv import load_dotenv

ROOT_DIR = Path(__file__).resolve().parents[1]
load_dotenv(ROOT_DIR / ".env")


@dataclass(frozen=True)
class Settings:
    seed: int = int(os.getenv("THREEPT_SEED", "20160101"))
    threads: int = int(os.getenv("THREEPT_THREADS", "1"))
    data_dir: str = os.getenv("THREEPT_DATA_DIR", "data/synth")
    out_dir: str = os.getenv("THREEPT_OUT_DIR", "data/out")
    log_level: str = os.getenv("THREEPT_LOG_LEVEL", "INFO")
    rim_height_ft: float = float(os.getenv("THREEPT_RIM_HEIGHT_FT", "10.0"))
    release_radius_ft: float = float(os.getenv("THREEPT_RELEASE_RADIUS_FT", "2.5"))
    window_s: float = float(os.getenv("THREEPT_WINDOW_S", "5.0"))
    min_window_s: float = float(os.getenv("THREEPT_MIN_WINDOW_S", "1.0"))
    min_attempts: int = int(os.getenv("THREEPT_MIN_ATTEMPTS", "20"))


settings = Settings()
