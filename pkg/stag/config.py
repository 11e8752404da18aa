import os

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Root directory holding <name>/<name>.content and <name>/<name>.cites
    data_dir: str = os.path.join(os.path.dirname(__file__), "..", "data")
    results_dir: str = os.path.join(os.path.dirname(__file__), "..", "results")

    log_level: str = "INFO"
    # Empty string disables the file handler
    log_file: str = ""

    # Parallel workers for --runs
    workers: int = 1

    model_config = {"env_prefix": "STAG_", "env_file": ".env", "env_file_encoding": "utf-8"}


settings = Settings()
