from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=True,
        extra="ignore"  # Allow extra environment variables
    )

    # Application
    LOG_LEVEL: str = Field(default="INFO")
    LOG_FORMAT: str = Field(default="json", description="json or console")
    OUTPUT_DIR: str = Field(default="runs", description="Default directory for run outputs")

    # Bus / broker
    BUS_HOST: str = Field(default="127.0.0.1")
    BUS_PORT: int = Field(default=0, description="0 picks an ephemeral port")
    MAX_FRAME_PAYLOAD: int = Field(default=65536, description="Bytes")

    # Node liveness
    NODE_ACK_TIMEOUT_S: float = Field(default=1.0, description="Missing ack → node down")
    NODE_CONNECT_ATTEMPTS: int = Field(default=10)
    NODE_STARTUP_TIMEOUT_S: float = Field(default=20.0)
    HARD_OVERRUN_FACTOR: float = Field(default=20.0, description="Tick overrun multiple that aborts a paced run")

@lru_cache()
def get_settings() -> Settings:
    return Settings()
