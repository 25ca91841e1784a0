"""Registry resolving application names to built applications.

Platforms receive artifacts that reference handlers by (app, function)
name; the registry turns those names back into callables. Built-in apps
are constructed lazily; additional applications register themselves.
"""
from __future__ import annotations

from .compiler import Application
from .errors import ConfigurationError

_APPS: dict[str, Application] = {}


def register_app(app: Application) -> None:
    _APPS[app.name] = app


def get_app(name: str) -> Application:
    if name not in _APPS:
        if name == "webshop":
            from .webshop import build_app

            _APPS[name] = build_app()
        else:
            raise ConfigurationError(f"unknown application: {name!r}")
    return _APPS[name]
