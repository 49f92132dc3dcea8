"""Python front end to the tutor engine.

Every structured value comes back as plain dicts and lists.
"""

import json
import os
from pathlib import Path

_bundled = Path(__file__).with_name("data")
if _bundled.is_dir():
    os.environ.setdefault("SOCRATIC_RESOURCE_DIR", str(_bundled))

from . import _socratic  # noqa: E402
from ._socratic import ServiceError, SourceError, fuse_grade, score_for, unproductive_success  # noqa: E402

__all__ = [
    "Engine",
    "ServiceError",
    "SourceError",
    "analyze",
    "execute",
    "fuse_grade",
    "generate_question",
    "grade_session_dir",
    "guard_turn",
    "replay_session",
    "score_for",
    "unproductive_success",
    "verify_explanation",
]


def analyze(source, seed=0, samples=3):
    return json.loads(_socratic.analyze(source, seed, samples))


def execute(source, inputs=None, step_budget=10000):
    return json.loads(_socratic.execute(source, json.dumps(inputs or {}), step_budget))


def generate_question(source, kc, seed=0, input_seed=0):
    """Returns {"question": ..., "reference": ...}."""
    return json.loads(_socratic.generate_question(source, kc, seed, input_seed))


def verify_explanation(reference, text, tier1_correct, attempts_used=0):
    return json.loads(_socratic.verify_explanation(json.dumps(reference), text, tier1_correct, attempts_used))


def guard_turn(source, question, text):
    return json.loads(_socratic.guard_turn(source, json.dumps(question) if question else "", text))


def replay_session(session_dir):
    return json.loads(_socratic.replay_session(str(session_dir)))


def grade_session_dir(session_dir):
    return json.loads(_socratic.grade_session_dir(str(session_dir)))


class Engine:
    """Session engine. An empty data_dir keeps everything in memory."""

    def __init__(self, data_dir="", from_environment=True):
        self._engine = _socratic.Engine(str(data_dir), from_environment)

    def put_assignment(self, config):
        self._engine.put_assignment(json.dumps(config))

    def assignments(self):
        return json.loads(self._engine.assignments())

    def create_submission(self, assignment_id, source):
        return json.loads(self._engine.create_submission(assignment_id, source))

    def start_session(self, submission_id, mode="FORMATIVE", seed=0, question_budget=None, proctor_token=None):
        request = {"submission_id": submission_id, "mode": mode, "seed": seed,
                   "question_budget": question_budget, "proctor_token": proctor_token}
        return json.loads(self._engine.start_session(json.dumps(request)))

    def session(self, session_id):
        return json.loads(self._engine.session(session_id))

    def submit_tier1(self, session_id, question_id, choice_index):
        return json.loads(self._engine.submit_tier1(session_id, question_id, choice_index))

    def submit_tier2(self, session_id, text):
        return json.loads(self._engine.submit_tier2(session_id, text))

    def message(self, session_id, text):
        return json.loads(self._engine.message(session_id, text))

    def abort(self, session_id, reason="requested"):
        return json.loads(self._engine.abort(session_id, reason))

    def report(self, session_id):
        return json.loads(self._engine.report(session_id))

    def session_dir(self, session_id):
        return self._engine.session_dir(session_id)
