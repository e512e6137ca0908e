"""Skill library and language-driven skill selection.

A skill couples a trained policy checkpoint with a natural-language
description. Selection builds a prompt from the scene, the instruction and
the numbered skill descriptions, sends it to a pluggable chat client, and
parses the returned skill number + rationale.

Clients: ``MockChatClient`` is a deterministic rule-based stand-in that
reads the structured prompt (no network, used in CI); ``RandomChatClient``
is the random-selection baseline; ``HttpChatClient`` talks to a live
chat-completions endpoint and is never exercised by the test suite.
"""

from __future__ import annotations

import json
import math
import re
import urllib.request
from dataclasses import dataclass, field

import numpy as np

from .serialize import check_version, load_json, save_json
from .transforms import Pose, quat_rotate

LIBRARY_FORMAT_VERSION = 1
TASKS_FORMAT_VERSION = 1

STANDING = "standing"
LYING = "lying"

SYSTEM_TEXT = (
    "You are a robot grasp-skill selector. Pick exactly one skill from the "
    "numbered library."
)

_BOTTOM_WORDS = {"bottom", "base", "lower", "low"}
_TOP_WORDS = {"top", "upper", "middle", "high", "neck"}


class SelectionParseError(ValueError):
    """Model output contained no usable skill number."""

    def __init__(self, message, raw=""):
        super().__init__(message)
        self.raw = raw


class SelectionOutOfRangeError(ValueError):
    """Model returned a number that is not a library skill id."""

    def __init__(self, message, raw=""):
        super().__init__(message)
        self.raw = raw


@dataclass
class Skill:
    id: int
    description: str
    checkpoint_ref: str = ""
    applicability: str = ""

    def __post_init__(self):
        if self.id < 1:
            raise ValueError("skill id must be >= 1")
        if not self.description.strip():
            raise ValueError("skill description must be non-empty")


class SkillLibrary:
    def __init__(self, skills):
        self.skills = list(skills)
        ids = [s.id for s in self.skills]
        if len(set(ids)) != len(ids):
            raise ValueError("skill ids must be unique")

    def __len__(self):
        return len(self.skills)

    def __iter__(self):
        return iter(self.skills)

    @property
    def ids(self):
        return [s.id for s in self.skills]

    def get(self, skill_id: int) -> Skill:
        for s in self.skills:
            if s.id == skill_id:
                return s
        raise KeyError(f"no skill with id {skill_id}")

    def to_dict(self):
        return {
            "version": LIBRARY_FORMAT_VERSION,
            "skills": [
                {
                    "id": s.id,
                    "description": s.description,
                    "checkpoint": s.checkpoint_ref,
                    "applicability": s.applicability,
                }
                for s in self.skills
            ],
        }

    @staticmethod
    def from_dict(d) -> "SkillLibrary":
        if isinstance(d, list):  # bare-array form
            entries = d
        else:
            check_version(d, LIBRARY_FORMAT_VERSION, "skill library")
            entries = d["skills"]
        return SkillLibrary(
            Skill(
                id=int(e["id"]),
                description=e["description"],
                checkpoint_ref=e.get("checkpoint", ""),
                applicability=e.get("applicability", ""),
            )
            for e in entries
        )

    def save(self, path):
        save_json(path, self.to_dict())

    @staticmethod
    def load(path) -> "SkillLibrary":
        return SkillLibrary.from_dict(load_json(path))


@dataclass
class SceneContext:
    object_name: str
    orientation: str  # STANDING or LYING
    summary: str = ""
    pose: Pose | None = None
    image: str | None = None  # pass-through handle for live clients

    def __post_init__(self):
        if self.orientation not in (STANDING, LYING):
            raise ValueError(f"orientation must be '{STANDING}' or '{LYING}'")
        if self.pose is not None:
            z_world = quat_rotate(self.pose.quat, np.array([0.0, 0.0, 1.0]))
            tilt = math.acos(min(1.0, abs(float(z_world[2]))))
            upright = tilt <= math.radians(45.0)
            if upright != (self.orientation == STANDING):
                raise ValueError(
                    f"orientation label {self.orientation!r} inconsistent with pose "
                    f"(z-axis tilt {math.degrees(tilt):.1f} deg)"
                )

    @staticmethod
    def from_dict(d) -> "SceneContext":
        return SceneContext(
            object_name=d["object"],
            orientation=d["orientation"],
            summary=d.get("summary", ""),
            pose=Pose.from_dict(d["pose"]) if d.get("pose") else None,
            image=d.get("image"),
        )


@dataclass
class SelectionResult:
    skill_id: int
    rationale: str
    raw: str


def build_prompt(scene: SceneContext, instruction: str, library: SkillLibrary) -> str:
    """Deterministic selection prompt: principles, numbered skills, scene,
    instruction, output format."""
    if len(library) == 0:
        raise ValueError("skill library is empty")
    lines = [
        "Select the best grasping skill using two principles:",
        "(i) the grasp must be feasible for the object's current pose, and",
        "(ii) the user's preference should be honored when feasible.",
        "",
        "Skills:",
    ]
    for s in library:
        extra = f" Applicable when: {s.applicability}" if s.applicability else ""
        lines.append(f"{s.id}. {s.description}{extra}")
    lines += [
        "",
        f"Scene: {scene.summary or scene.object_name}",
        f"Object: {scene.object_name}",
        f"Orientation: {scene.orientation}",
        "Instruction: " + (instruction.strip() if instruction.strip() else "no preference given"),
        "",
        "Answer with the number of the selected skill followed by a rationale "
        "of at most 3 sentences.",
    ]
    return "\n".join(lines)


_INT_RE = re.compile(r"(?<![\w.])(\d+)(?!\.\d)(?![\w])")
_SENTENCE_RE = re.compile(r"[^.!?]*[.!?]?")


def _truncate_sentences(text: str, limit: int = 3) -> str:
    sentences = [m.group(0).strip() for m in _SENTENCE_RE.finditer(text) if m.group(0).strip()]
    return " ".join(sentences[:limit])


def parse_selection(raw: str, library: SkillLibrary) -> SelectionResult:
    """Extract the first standalone integer that names a library skill; the
    remaining text becomes the rationale (at most 3 sentences)."""
    matches = list(_INT_RE.finditer(raw))
    if not matches:
        raise SelectionParseError(f"no skill number found in model output: {raw!r}", raw)
    chosen = None
    for m in matches:
        if int(m.group(1)) in library.ids:
            chosen = m
            break
    if chosen is None:
        raise SelectionOutOfRangeError(
            f"model chose skill {matches[0].group(1)}, not in library ids {library.ids}", raw
        )
    rest = (raw[: chosen.start()] + raw[chosen.end():]).strip().lstrip(".:-) \n")
    return SelectionResult(
        skill_id=int(chosen.group(1)),
        rationale=_truncate_sentences(rest),
        raw=raw,
    )


def format_selection(result: SelectionResult) -> str:
    """Canonical text form; parse_selection round-trips the skill id."""
    return f"{result.skill_id}. {result.rationale}".strip()


def select_skill(
    client,
    scene: SceneContext,
    instruction: str,
    library: SkillLibrary,
    retries: int = 2,
    timeout: float = 30.0,
) -> SelectionResult:
    """build_prompt -> client -> parse, re-prompting with a format reminder
    on parse failures up to ``retries`` times."""
    prompt = build_prompt(scene, instruction, library)
    last_error = None
    for attempt in range(retries + 1):
        user = prompt
        if attempt > 0:
            user += (
                "\n\nReminder: reply with the skill number "
                f"(one of {library.ids}) followed by a short rationale."
            )
        text = client.complete(system=SYSTEM_TEXT, user=user, image=scene.image,
                               timeout=timeout)
        try:
            return parse_selection(text, library)
        except (SelectionParseError, SelectionOutOfRangeError) as e:
            last_error = e
    raise last_error


# -- clients -----------------------------------------------------------------


def _prompt_field(user: str, label: str) -> str:
    m = re.search(rf"^{label}: (.*)$", user, flags=re.MULTILINE)
    return m.group(1).strip() if m else ""


def _prompt_skills(user: str):
    """(id, text) pairs from the numbered part of the prompt."""
    out = []
    for m in re.finditer(r"^(\d+)\. (.*)$", user, flags=re.MULTILINE):
        out.append((int(m.group(1)), m.group(2).lower()))
    return out


class MockChatClient:
    """Deterministic rule-based selector for offline runs and CI.

    Applies the same two principles the prompt asks for: drop skills whose
    text names the other orientation, then match bottom/top preference
    words; ties go to the highest skill id. Replies in the required
    "number + rationale" format.
    """

    def complete(self, system: str, user: str, image=None, timeout=None) -> str:
        orientation = _prompt_field(user, "Orientation") or STANDING
        instruction = _prompt_field(user, "Instruction").lower()
        obj = _prompt_field(user, "Object") or "object"
        skills = _prompt_skills(user)
        other = LYING if orientation == STANDING else STANDING

        feasible = [(i, text) for i, text in skills if other not in text]
        if not feasible:
            feasible = skills

        wants_bottom = any(w in instruction for w in _BOTTOM_WORDS)
        wants_top = any(w in instruction for w in _TOP_WORDS)

        def score(text):
            s = 0
            if wants_bottom and any(w in text for w in _BOTTOM_WORDS):
                s += 1
            if wants_top and any(w in text for w in _TOP_WORDS):
                s += 1
            return s

        best = max(score(text) for _, text in feasible)
        chosen = max(i for i, text in feasible if score(text) == best)

        sentences = [f"The {obj} is {orientation}, so skill {chosen} is feasible."]
        if (wants_bottom or wants_top) and best > 0:
            sentences.append("It also matches the requested grasp region.")
        elif wants_bottom or wants_top:
            sentences.append(
                "The requested region is not reachable in this pose, so feasibility wins."
            )
        else:
            sentences.append("No preference was given, so the grasp choice is free.")
        return f"{chosen}. " + " ".join(sentences)


class RandomChatClient:
    """Random-selection baseline: uniform over the library ids, ignoring the
    scene and the instruction."""

    def __init__(self, seed=0):
        self.rng = np.random.default_rng(seed)

    def complete(self, system: str, user: str, image=None, timeout=None) -> str:
        ids = [i for i, _ in _prompt_skills(user)]
        if not ids:
            return "no skills listed"
        pick = int(self.rng.choice(ids))
        return f"{pick}. Chosen uniformly at random."


class HttpChatClient:
    """Minimal chat-completions client. The API key comes from an
    environment variable; endpoint and model from configuration. Not used
    by the test suite."""

    def __init__(self, endpoint: str, model: str, api_key: str):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key

    def complete(self, system: str, user: str, image=None, timeout=30.0) -> str:
        content = [{"type": "text", "text": user}]
        if image:
            content.append({"type": "image_url", "image_url": {"url": image}})
        body = json.dumps(
            {
                "model": self.model,
                "messages": [
                    {"role": "system", "content": system},
                    {"role": "user", "content": content},
                ],
            }
        ).encode()
        req = urllib.request.Request(
            self.endpoint,
            data=body,
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {self.api_key}",
            },
        )
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            payload = json.loads(resp.read().decode())
        return payload["choices"][0]["message"]["content"]


# -- task suite ---------------------------------------------------------------


@dataclass
class Task:
    name: str
    scene: SceneContext
    instruction: str

    @staticmethod
    def from_dict(d) -> "Task":
        return Task(
            name=d["name"],
            scene=SceneContext.from_dict(d["scene"]),
            instruction=d.get("instruction", ""),
        )


def load_tasks(path) -> list[Task]:
    d = load_json(path)
    check_version(d, TASKS_FORMAT_VERSION, "tasks")
    return [Task.from_dict(t) for t in d["tasks"]]


@dataclass
class SuiteReport:
    frequencies: dict  # task name -> {skill id -> fraction of trials}
    counts: dict  # task name -> {skill id -> raw count}
    success_rates: dict = field(default_factory=dict)  # task name -> SR (with executor)
    errors: list = field(default_factory=list)  # (task, trial, message)

    def format_table(self) -> str:
        tasks = list(self.frequencies)
        ids = sorted({i for f in self.frequencies.values() for i in f})
        header = "P(skill | task) %  " + "  ".join(f"{t:>8}" for t in tasks)
        rows = [header]
        for i in ids:
            cells = "  ".join(
                f"{100.0 * self.frequencies[t].get(i, 0.0):8.1f}" for t in tasks
            )
            rows.append(f"Skill {i:<13}{cells}")
        if self.success_rates:
            cells = "  ".join(
                f"{100.0 * self.success_rates.get(t, 0.0):8.1f}" for t in tasks
            )
            rows.append(f"{'SR %':<19}{cells}")
        return "\n".join(rows)


def run_task_suite(
    client,
    tasks: list[Task],
    library: SkillLibrary,
    n_trials: int = 25,
    executor=None,
    retries: int = 2,
) -> SuiteReport:
    """Select a skill ``n_trials`` times per task; tabulate frequencies.

    ``executor(skill, task) -> bool`` (optional) runs the selected skill and
    contributes a per-task execution success rate. Per-trial selection
    errors are recorded and do not abort the suite.
    """
    freqs, counts, srs, errors = {}, {}, {}, []
    for task in tasks:
        tally = {i: 0 for i in library.ids}
        successes = 0
        executed = 0
        for trial in range(n_trials):
            try:
                result = select_skill(client, task.scene, task.instruction, library,
                                      retries=retries)
            except (SelectionParseError, SelectionOutOfRangeError, OSError) as e:
                errors.append((task.name, trial, str(e)))
                continue
            tally[result.skill_id] += 1
            if executor is not None:
                executed += 1
                if executor(library.get(result.skill_id), task):
                    successes += 1
        total = max(sum(tally.values()), 1)
        counts[task.name] = tally
        freqs[task.name] = {i: c / total for i, c in tally.items()}
        if executor is not None and executed:
            srs[task.name] = successes / executed
    return SuiteReport(frequencies=freqs, counts=counts, success_rates=srs, errors=errors)
