"""Access to fixtures shipped inside the package."""

from importlib import resources
from pathlib import Path


def bundled_path(*parts: str) -> Path:
    """Path to a file under the package data directory.

    Examples: ``bundled_path("scenarios", "mandaluyong.json")``,
    ``bundled_path("survey_mandaluyong.csv")``.
    """
    return Path(str(resources.files("motorlance").joinpath("data", *parts)))
