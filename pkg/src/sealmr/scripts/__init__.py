"""Reference map/reduce scripts shipped with the package."""

from importlib import resources

NAMES = ("wordcount_map", "wordcount_reduce", "kmeans_map", "kmeans_reduce")


def load_script(name: str) -> str:
    if name not in NAMES:
        raise KeyError(f"no bundled script named {name!r}; have {', '.join(NAMES)}")
    return resources.files(__name__).joinpath(f"{name}.lua").read_text(encoding="utf-8")
