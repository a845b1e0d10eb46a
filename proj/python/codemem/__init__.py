"""Python access to the codemem runtime core.

Results come back as plain dicts and lists. Failures raise CodememError
with the error kind in ``.kind``.
"""

import json as _json

from . import _core

__version__ = _core.__version__

__all__ = [
    "CodememError",
    "Runtime",
    "aggregate",
    "asset_dir",
    "context_cost",
    "count_tokens",
    "load_task",
    "phase_timings",
    "run_suite",
    "run_task",
]


CodememError = _core.Error
CodememError.kind = property(lambda self: self.args[0] if self.args else "")
CodememError.message = property(lambda self: self.args[1] if len(self.args) > 1 else "")


def _events_text(events):
    return events if isinstance(events, str) else _json.dumps(list(events))


def asset_dir():
    return _core.asset_dir()


def count_tokens(text):
    return _core.count_tokens(text)


def load_task(path):
    return _json.loads(_core.load_task(str(path)))


def run_task(task, driver="", with_events=False):
    return _json.loads(_core.run_task(str(task), driver, with_events))


def run_suite(suite, driver="", repeats=1, workers=1, label="codemem"):
    return _json.loads(_core.run_suite(str(suite), driver, repeats, workers, label))


def aggregate(records):
    """Summary rows per label for a list of records or a ``{"records": [...]}`` document."""
    return _json.loads(_core.aggregate(records if isinstance(records, str) else _json.dumps(records)))


def context_cost(events, mode="codemem"):
    return _json.loads(_core.context_cost(_events_text(events), mode))


def phase_timings(events):
    return _json.loads(_core.phase_timings(_events_text(events)))


class Runtime:
    """Registry, skill bank and orchestrator over one data directory."""

    def __init__(self, **config):
        self._rt = _core.Runtime(_json.dumps(config))

    def install_skill(self, name, file, description=""):
        return _json.loads(self._rt.install_skill(name, str(file), description))

    def skills(self):
        return _json.loads(self._rt.skills())

    def create_session(self, driver="", fixture=""):
        return self._rt.create_session(driver, fixture)

    def send(self, session_id, text):
        return _json.loads(self._rt.send(session_id, text))

    def run_skill(self, name, args=None, fixture="case_study", version=None):
        return _json.loads(self._rt.run_skill(name, _json.dumps(args or {}), fixture, version))

    def events(self, session_id):
        return _json.loads(self._rt.events(session_id))

    def search(self, query, k=5):
        return _json.loads(self._rt.search(query, k))
