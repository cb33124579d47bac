"""
Configuration settings for the FTP lab
"""
import logging
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Datasets and outputs
    data_root: str = Field("data", description="Dataset root directory (env DATA_ROOT)")
    output_dir: str = Field("runs", description="Default directory for metrics files")

    # Application Settings
    log_level: str = Field("INFO")
    progress_bar: bool = Field(False)
    default_seed: int = Field(0)
    workers: int = Field(1, ge=1)

    # API Configuration
    api_host: str = Field("0.0.0.0")
    api_port: int = Field(8000)
    api_reload: bool = Field(False)

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",  # Allow extra fields in environment
    )


# Global settings instance
settings = Settings()


# Architecture presets
ARCH_CONFIGS = {
    "fc/mnist": {"input_dim": 784, "hidden": (1024, 128), "classes": 10, "dropout": 0.1},
    "fc/fmnist": {"input_dim": 784, "hidden": (1024, 128), "classes": 10, "dropout": 0.1},
    "fc/cifar10": {"input_dim": 3072, "hidden": (1024, 128), "classes": 10, "dropout": 0.1},
    "fc/cifar100": {"input_dim": 3072, "hidden": (1024, 128), "classes": 100, "dropout": 0.1},
    "cnn/mnist": {"input_shape": (1, 28, 28), "channels": 32, "kernel": 5, "classes": 10},
    "cnn/fmnist": {"input_shape": (1, 28, 28), "channels": 32, "kernel": 5, "classes": 10},
    "cnn/cifar10": {"input_shape": (3, 32, 32), "channels": 32, "kernel": 5, "classes": 10},
    "cnn/cifar100": {"input_shape": (3, 32, 32), "channels": 32, "kernel": 5, "classes": 100},
    "rnn/series": {"window": 24, "hidden": 512},
}

# Training length per family
DEFAULT_EPOCHS = {
    "fc": 100,
    "cnn": 100,
    "rnn": 500,
}

# Learning-rate decay epochs per family
DECAY_EPOCHS = {
    "fc": (60, 90),
    "cnn": (60, 90),
    "rnn": (300, 450),
}


def get_arch_config(family: str, dataset: Optional[str] = None) -> dict:
    """Get the architecture preset for a family/dataset pair"""
    key = f"{family}/{dataset}"
    if key in ARCH_CONFIGS:
        return ARCH_CONFIGS[key]
    if family == "rnn":
        return ARCH_CONFIGS["rnn/series"]
    # Fallback to the MNIST preset of the family
    return ARCH_CONFIGS.get(f"{family}/mnist", ARCH_CONFIGS["fc/mnist"])


def configure_logging(level: Optional[str] = None) -> None:
    """Configure root logging once for CLI and API entry points"""
    logging.basicConfig(
        level=getattr(logging, (level or settings.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
