from pydantic import BaseModel, Field

from .schemas import WritePolicy


class NoiseModel(BaseModel):
    """Programming-error and precision model of an analog weight array"""
    alpha: float = Field(0.0, ge=0.0, description="Noise std as a multiple of |w|")
    bits: int = Field(32, ge=2, description="Device precision; 32 means full precision")
    corrupted_fraction: float = Field(0.0, ge=0.0, le=1.0)
    margin: float = Field(0.10, ge=0.0)
    write_policy: WritePolicy = WritePolicy.PER_UPDATE
    quantize_forward: bool = True
    range_scale: float = Field(1.25, gt=0.0, description="Range r = scale * max|w| at init")

    @property
    def full_precision(self) -> bool:
        return self.bits >= 32
