"""User-level configuration for tdfit."""

import copy
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml


DEFAULT_CONFIG = {
    "threads": 1,
    "log_level": "WARNING",
    # Variable-projection solver
    "max_iterations": 50,
    "damping": 1e-3,
    "jacobian": "kaufman",  # kaufman or exact
    # MI-MUSIC search grid is music_grid_factor * N points
    "music_grid_factor": 10,
    "plot_format": "svg",
    "write_metadata": True,
}


class Config:
    """Manages tdfit user defaults stored in ``config.yaml``."""

    def __init__(self, tdfit_dir: Optional[Path] = None):
        """Initialize config manager."""
        if tdfit_dir is None:
            # TDFIT_DIR overrides the home directory (useful for testing)
            env_dir = os.environ.get("TDFIT_DIR")
            if env_dir:
                tdfit_dir = Path(env_dir)
            else:
                tdfit_dir = Path.home() / ".tdfit"
        self.tdfit_dir = Path(tdfit_dir)
        self.config_file = self.tdfit_dir / "config.yaml"
        self._config: Dict[str, Any] = copy.deepcopy(DEFAULT_CONFIG)
        self.load()

    def load(self) -> None:
        """Load configuration from file."""
        if self.config_file.exists():
            with open(self.config_file, "r", encoding="utf-8") as f:
                user_config = yaml.safe_load(f) or {}
            if not isinstance(user_config, dict):
                return
            self._config.update(user_config)

    def save(self) -> None:
        """Save configuration to file."""
        self.tdfit_dir.mkdir(parents=True, exist_ok=True)
        with open(self.config_file, "w", encoding="utf-8") as f:
            yaml.dump(self._config, f, default_flow_style=False)

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value."""
        return self._config.get(key, default)

    def set(self, key: str, value: Any) -> None:
        """Set configuration value."""
        self._config[key] = value

    @property
    def threads(self) -> int:
        return max(1, int(self.get("threads", 1)))

    @property
    def log_level(self) -> str:
        return str(self.get("log_level", "WARNING")).upper()
