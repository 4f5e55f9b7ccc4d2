"""Validated configuration of one command-line run"""

import os
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

COMMANDS = ("tt", "metrics", "export-lut", "synth", "eval", "train", "retrain", "hist")


class RunConfig(BaseModel):
    command: Literal["tt", "metrics", "export-lut", "synth", "eval", "train", "retrain", "hist"]
    model: Optional[str] = None
    variant: Optional[int] = None
    all_models: bool = False
    hypotheses: bool = False
    format: Literal["csv", "json"] = "json"
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    # Unset --threads falls back to APPROXMUL_THREADS, validated like the flag.
    threads: int = Field(default_factory=lambda: os.getenv("APPROXMUL_THREADS", "1"), ge=1, validate_default=True)
    out: Optional[str] = None
    mnist: Optional[str] = None
    lut: str = "exact"
    checkpoint: Optional[str] = None
    epochs: int = Field(default=5, ge=0)
    lr: float = Field(default=0.01, gt=0)
    l2: float = Field(default=0.0, ge=0)
    plus: bool = False
    db: Optional[str] = None
    batch_size: int = Field(default=64, ge=1)
    calib_size: int = Field(default=1000, ge=1)
    holdout: float = Field(default=0.1, gt=0, lt=1)
    max_train: Optional[int] = Field(default=None, ge=1)

    @field_validator("model")
    @classmethod
    def _known_model(cls, value: Optional[str]) -> Optional[str]:
        if value is None:
            return value
        from multipliers import available_models

        valid = available_models()
        if value not in valid:
            raise ValueError(f"unknown multiplier {value!r}; valid names: {', '.join(valid)}")
        return value

    @field_validator("variant")
    @classmethod
    def _known_variant(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value not in (1, 2, 3):
            raise ValueError(f"unknown variant {value}; valid variants: 1, 2, 3")
        return value

    @model_validator(mode="after")
    def _required_inputs(self) -> "RunConfig":
        if self.command in ("tt", "synth") and self.model is None:
            raise ValueError(f"{self.command} needs a multiplier name")
        if self.command == "metrics" and not (self.model or self.variant or self.all_models or self.hypotheses):
            raise ValueError("metrics needs a multiplier name, --variant, --all or --hypotheses")
        if self.command == "export-lut" and not (self.model or self.variant):
            raise ValueError("export-lut needs --variant or a multiplier name")
        if self.command in ("eval", "retrain", "hist") and self.checkpoint is None:
            raise ValueError(f"{self.command} needs --checkpoint")
        if self.command in ("eval", "train", "retrain", "hist") and self.mnist is None:
            raise ValueError(f"{self.command} needs --mnist or APPROXMUL_MNIST")
        if self.command in ("train", "retrain", "export-lut") and self.out is None:
            raise ValueError(f"{self.command} needs --out")
        if self.command == "train" and self.epochs < 1:
            raise ValueError("train needs --epochs of at least 1")
        return self

    @property
    def subject_name(self) -> Optional[str]:
        """Multiplier selected by name or by --variant"""
        if self.model is not None:
            return self.model
        if self.variant is not None:
            return f"mul8x8_{self.variant}"
        return None
