"""Access to the JSON fixtures shipped with the package."""

from importlib import resources


def data_path(name: str) -> str:
    """Absolute path of a shipped fixture file, e.g. data_path("toy_scene.json")."""
    return str(resources.files("graspkit.data").joinpath(name))
