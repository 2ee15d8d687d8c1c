"""Sub-goal space derivation and yes/no state labeling with pluggable backends.

A backend answers two kinds of questions: ``decompose(instruction)`` returns
the ordered sub-goal descriptions, and ``judge(state, space, i)`` says whether
``state`` belongs to sub-goal ``i``. Asking ``judge`` once per sub-goal gives a
K-bit vector that :func:`resolve_multihot` turns into a one-hot label.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .env import EnvKind, EnvState, parse_order
from .expert import DemoDataset, Trajectory

DEFAULT_CREDENTIAL_ENV = "SEAL_LLM_API_KEY"


class LabelerError(RuntimeError):
    pass


class UnsupportedTask(LabelerError):
    pass


class DecompositionError(LabelerError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class LabelingError(LabelerError):
    def __init__(self, message: str, state_index: Optional[int] = None, completed: int = 0):
        super().__init__(message)
        self.state_index = state_index
        self.completed = completed


class BackendError(LabelerError):
    pass


# ---------------------------------------------------------------------------
# sub-goal space


@dataclass(frozen=True)
class SubgoalSpace:
    instruction: str
    subgoals: Tuple[str, ...]

    @property
    def k(self) -> int:
        return len(self.subgoals)

    @property
    def hash(self) -> str:
        blob = json.dumps({"instruction": self.instruction, "subgoals": list(self.subgoals)}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def codebook(self) -> "Codebook":
        return Codebook(self.k)


class Codebook:
    """The K fixed one-hot latent vectors; entry i stands for sub-goal i."""

    def __init__(self, k: int):
        self._entries = np.eye(k)
        self._entries.setflags(write=False)

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, i) -> np.ndarray:
        return self._entries[i]


def task_instruction(kind: EnvKind, order=None) -> str:
    if kind.is_keydoor:
        return "Pick up the key, and then unlock the door."
    order = parse_order(kind, order)
    parts = [f"pick up Object {i + 1}" for i in order]
    return "P" + ", then ".join(parts)[1:] + "."


def canonical_subgoals(kind: EnvKind, order=None) -> List[str]:
    if kind.is_keydoor:
        return ["move to the key", "pick up the key", "move to the door", "unlock the door"]
    out = []
    for i in parse_order(kind, order):
        out += [f"move to object {i + 1}", f"pick up object {i + 1}"]
    return out


_KEYDOOR_RE = re.compile(r"pick\s+up\s+the\s+key.*unlock\s+the\s+door", re.I | re.S)
_OBJECT_RE = re.compile(r"pick\s+up\s+object\s*(\d+)", re.I)


def _parse_instruction(instruction: str) -> Tuple[EnvKind, Tuple[int, ...]]:
    if _KEYDOOR_RE.search(instruction):
        return EnvKind(), (0, 1)
    objects = [int(m) - 1 for m in _OBJECT_RE.findall(instruction)]
    if objects and sorted(objects) == list(range(len(objects))):
        try:
            kind = EnvKind(len(objects))
        except ValueError as e:
            raise UnsupportedTask(str(e)) from None
        return kind, tuple(objects)
    raise UnsupportedTask(f"no canonical sub-goals for instruction {instruction!r}")


# sub-goal text -> (verb, target identity index)
_SUBGOAL_RE = re.compile(r"(move|go|pick\s+up|unlock)\b.*?\b(key|door|object\s*(\d+))", re.I)


def parse_subgoal(text: str) -> Tuple[str, int]:
    m = _SUBGOAL_RE.search(text)
    if not m:
        raise LabelerError(f"cannot interpret sub-goal {text!r}")
    verb = m.group(1).lower()
    verb = "move" if verb in ("move", "go") else "interact"
    noun = m.group(2).lower()
    if noun == "key":
        return verb, 0
    if noun == "door":
        return verb, 1
    return verb, int(m.group(3)) - 1


def decompose_task(instruction: str, backend) -> SubgoalSpace:
    if not instruction or not instruction.strip():
        raise ValueError("empty task instruction")
    return SubgoalSpace(instruction=instruction.strip(), subgoals=tuple(backend.decompose(instruction.strip())))


def resolve_multihot(bits: Sequence[int]) -> np.ndarray:
    """First set bit wins; an all-zero answer falls back to the last sub-goal."""
    bits = [int(b) for b in bits]
    k = len(bits)
    idx = next((i for i, b in enumerate(bits) if b), k - 1)
    z = np.zeros(k)
    z[idx] = 1.0
    return z


def state_key(state: EnvState, space: SubgoalSpace) -> str:
    return space.hash + ":" + ",".join(str(v) for v in state.raw())


# ---------------------------------------------------------------------------
# backends


class OracleBackend:
    """Answers from the rule table; treats sub-goal text the way a reader would."""

    def __init__(self):
        self.calls = 0
        self._parsed: Dict[tuple, list] = {}

    def decompose(self, instruction: str) -> List[str]:
        kind, order = _parse_instruction(instruction)
        return canonical_subgoals(kind, order)

    def judge(self, state: EnvState, space: SubgoalSpace, index: int) -> bool:
        self.calls += 1
        parsed = self._parsed.get(space.subgoals)
        if parsed is None:
            parsed = self._parsed[space.subgoals] = [parse_subgoal(s) for s in space.subgoals]
        sequence = [t for verb, t in parsed if verb == "interact"]
        current = next((t for t in sequence if not state.statuses[t]), None)
        if current is None:
            return index == space.k - 1
        verb, target = parsed[index]
        if target != current:
            return False
        at = state.player == state.positions[target]
        return at if verb == "interact" else not at


class ReplayBackend:
    """Serves answers recorded in a JSONL fixture; never contacts anything."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.calls = 0
        self._decompositions: Dict[str, List[str]] = {}
        self._answers: Dict[Tuple[str, int], bool] = {}
        with self.path.open() as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec["type"] == "decompose":
                    self._decompositions[rec["instruction"]] = list(rec["subgoals"])
                elif rec["type"] == "judge":
                    self._answers[(rec["state_key"], int(rec["index"]))] = rec["answer"] == "yes"

    def decompose(self, instruction: str) -> List[str]:
        try:
            return list(self._decompositions[instruction])
        except KeyError:
            raise BackendError(f"fixture has no decomposition for {instruction!r}") from None

    def judge(self, state: EnvState, space: SubgoalSpace, index: int) -> bool:
        self.calls += 1
        try:
            return self._answers[(state_key(state, space), index)]
        except KeyError:
            raise BackendError(f"fixture has no answer for state {state.raw()} sub-goal {index}") from None


def record_fixture(backend, dataset: DemoDataset, space: SubgoalSpace, path: Union[str, Path]) -> None:
    """Query ``backend`` for every distinct dataset state and save a replay fixture."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    seen = set()
    with path.open("w") as f:
        f.write(json.dumps({"type": "decompose", "instruction": space.instruction,
                            "subgoals": list(space.subgoals)}, sort_keys=True) + "\n")
        for traj in dataset.trajectories:
            for s in traj.states:
                key = state_key(s, space)
                if key in seen:
                    continue
                seen.add(key)
                for i in range(space.k):
                    ans = "yes" if backend.judge(s, space, i) else "no"
                    f.write(json.dumps({"type": "judge", "state_key": key, "index": i, "answer": ans},
                                       sort_keys=True) + "\n")


def load_template(name: str) -> Template:
    return Template(resources.files("seal_hil").joinpath("prompts").joinpath(name).read_text())


def decomposition_prompt(instruction: str, kind: Optional[EnvKind] = None) -> str:
    if kind is None:
        try:
            kind, _ = _parse_instruction(instruction)
        except UnsupportedTask:
            kind = None
    if kind is None or kind.is_keydoor:
        names = ["Key", "Door"]
        status = ["The status of key (picked/not)", "The status of door (unlocked/locked)"]
        actions = "move up/right/left/down, pick up, unlock"
    else:
        names = [f"Object {i + 1}" for i in range(kind.n_objects)]
        status = [f"The status of object {i + 1} (picked/not)" for i in range(kind.n_objects)]
        actions = "move up/right/left/down, pick up"
    obs = [f"The coordinate of {n.lower()}" for n in names] + ["The coordinate of player itself"] + status
    return load_template("decompose.txt").substitute(
        instruction=instruction,
        objects=", ".join(names),
        observation_space="\n".join(f"o{i + 1}: {o}" for i, o in enumerate(obs)),
        action_space=actions,
    )


def judgment_prompt(state: EnvState, space: SubgoalSpace, index: int) -> str:
    stages = "\n".join(f"{i + 1}. {s}" for i, s in enumerate(space.subgoals))
    px, py = state.player
    if state.kind.is_keydoor:
        (kx, ky), (dx, dy) = state.positions[0], state.positions[1]
        ks, ds = state.statuses
        return load_template("judge_keydoor.txt").substitute(
            key_x=kx, key_y=ky, door_x=dx, door_y=dy, player_x=px, player_y=py,
            key_state=ks, door_state=ds,
            key_sentence="Key is picked up." if ks else "Key is not picked up.",
            door_sentence="Door is unlocked." if ds else "Door is locked.",
            stages=stages, index=index + 1, subgoal=space.subgoals[index],
        )
    n = state.kind.n_objects
    objects = "\n".join(f"Object {i + 1} at the coordinate: [{x}, {y}]." for i, (x, y) in enumerate(state.positions[:n]))
    statuses = "\n".join(
        f"Object {i + 1} is {'picked up' if s else 'not picked up'}. (object {i + 1} state = {s})"
        for i, s in enumerate(state.statuses)
    )
    return load_template("judge_gridworld.txt").substitute(
        n_objects=n, object_lines=objects, status_lines=statuses, player_x=px, player_y=py,
        stages=stages, index=index + 1, subgoal=space.subgoals[index],
    )


_STEP_RE = re.compile(r"^\W*step\s*\d+\s*[:.)]\s*(.+?)\s*$", re.I | re.M)


def parse_steps(text: str) -> List[str]:
    steps = []
    for m in _STEP_RE.finditer(text):
        s = re.split(r",?\s*relevant features", m.group(1), flags=re.I)[0]
        s = s.strip(" *.,{}")
        if s:
            steps.append(s)
    return steps


def normalize_answer(text: str) -> Optional[str]:
    """Map a free-text reply onto ``"yes"``/``"no"``; None when it is neither."""
    words = re.findall(r"[a-z0-9]+", text.lower())
    if not words:
        return None
    head = words[0]
    if head in ("yes", "y", "1", "true"):
        return "yes"
    if head in ("no", "n", "0", "false"):
        return "no"
    return None


class RateLimiter:
    def __init__(self, min_interval: float):
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self) -> None:
        with self._lock:
            now = time.monotonic()
            delay = self._next - now
            self._next = max(now, self._next) + self.min_interval
        if delay > 0:
            time.sleep(delay)


def http_transport(endpoint: str, model: str, credential: str, timeout: float = 60.0) -> Callable[[str], str]:
    """POST ``{"model", "prompt"}`` as JSON and read back ``text`` (or an OpenAI-style choice)."""

    def send(prompt: str) -> str:
        body = json.dumps({"model": model, "prompt": prompt}).encode()
        req = urllib.request.Request(
            endpoint,
            data=body,
            headers={"Content-Type": "application/json", "Authorization": f"Bearer {credential}"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                payload = json.loads(resp.read().decode())
        except OSError as e:
            raise BackendError(f"request to {endpoint} failed: {e}") from e
        if isinstance(payload, dict):
            if "text" in payload:
                return str(payload["text"])
            choices = payload.get("choices") or []
            if choices:
                c = choices[0]
                if "text" in c:
                    return str(c["text"])
                if "message" in c:
                    return str(c["message"].get("content", ""))
        raise BackendError(f"unrecognised response from {endpoint}")

    return send


class RemoteBackend:
    """Text-completion service; one retry on a malformed answer, then a hard error."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        credential_env: str = DEFAULT_CREDENTIAL_ENV,
        transport: Optional[Callable[[str], str]] = None,
        workers: int = 4,
        min_interval: float = 0.0,
    ):
        self.endpoint, self.model, self.credential_env = endpoint, model, credential_env
        self.workers = max(1, workers)
        self.calls = 0
        self._limiter = RateLimiter(min_interval)
        self._lock = threading.Lock()
        if transport is None:
            credential = os.environ.get(credential_env)
            if not credential:
                raise BackendError(f"environment variable {credential_env} holds no credential")
            transport = http_transport(endpoint, model, credential)
        self._send = transport

    def complete(self, prompt: str) -> str:
        self._limiter.wait()
        with self._lock:
            self.calls += 1
        return self._send(prompt)

    def decompose(self, instruction: str) -> List[str]:
        raw = self.complete(decomposition_prompt(instruction))
        steps = parse_steps(raw)
        if not steps:
            raise DecompositionError("no 'Step i:' lines in decomposition response", raw)
        return steps

    def judge(self, state: EnvState, space: SubgoalSpace, index: int) -> bool:
        prompt = judgment_prompt(state, space, index)
        for _ in range(2):
            answer = normalize_answer(self.complete(prompt))
            if answer is not None:
                return answer == "yes"
        raise LabelingError(f"malformed yes/no answer for sub-goal {index}")


def make_backend(name: str, fixture=None, endpoint=None, model=None, credential_env=DEFAULT_CREDENTIAL_ENV,
                 workers: int = 4):
    if name == "oracle":
        return OracleBackend()
    if name == "replay":
        if fixture is None:
            raise ValueError("replay backend needs a fixture file")
        return ReplayBackend(fixture)
    if name == "remote":
        if not endpoint or not model:
            raise ValueError("remote backend needs an endpoint and a model name")
        return RemoteBackend(endpoint, model, credential_env, workers=workers)
    raise ValueError(f"unknown labeler backend {name!r}")


# ---------------------------------------------------------------------------
# labeling with a persistent cache


def label_state(state: EnvState, space: SubgoalSpace, backend) -> np.ndarray:
    if space.k != state.kind.n_subgoals:
        raise ValueError(f"space has K={space.k}, {state.kind.name} needs {state.kind.n_subgoals}")
    return resolve_multihot([int(backend.judge(state, space, i)) for i in range(space.k)])


@dataclass
class LabelCache:
    path: Optional[Path]
    entries: Dict[str, dict] = field(default_factory=dict)

    @classmethod
    def open(cls, path: Union[str, Path, None]) -> "LabelCache":
        cache = cls(Path(path) if path else None)
        if cache.path and cache.path.exists():
            with cache.path.open() as f:
                for line in f:
                    if line.strip():
                        rec = json.loads(line)
                        cache.entries[rec["state_key"]] = rec
        return cache

    def add(self, records: Sequence[dict]) -> None:
        if not records:
            return
        for rec in records:
            self.entries[rec["state_key"]] = rec
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a") as f:
                for rec in records:
                    f.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def label_dataset(
    dataset: DemoDataset,
    space: SubgoalSpace,
    backend,
    cache: Union[str, Path, None] = None,
    workers: Optional[int] = None,
) -> DemoDataset:
    """Annotate every state; answers persist in ``cache`` so reruns query nothing."""
    if space.k != dataset.kind.n_subgoals:
        raise ValueError(f"space has K={space.k}, {dataset.kind.name} needs {dataset.kind.n_subgoals}")
    store = LabelCache.open(cache)
    pending, seen = [], set()
    for traj in dataset.trajectories:
        for s in traj.states:
            key = state_key(s, space)
            if key not in store.entries and key not in seen:
                seen.add(key)
                pending.append((key, s))

    def query(item):
        key, s = item
        bits = [int(backend.judge(s, space, i)) for i in range(space.k)]
        return {"state_key": key, "bits": bits, "resolved_index": int(np.argmax(resolve_multihot(bits)))}

    width = workers or getattr(backend, "workers", 1)
    chunk = max(1, 4 * width)
    done = 0
    pool = ThreadPoolExecutor(width) if width > 1 else None
    try:
        for start in range(0, len(pending), chunk):
            items = pending[start:start + chunk]
            futures = [pool.submit(query, it) for it in items] if pool else None
            results = []
            for j, it in enumerate(items):
                try:
                    results.append(futures[j].result() if pool else query(it))
                except LabelerError as e:
                    store.add(results)
                    raise LabelingError(f"labeling stopped after {done + len(results)} states: {e}",
                                        state_index=start + j, completed=done + len(results)) from e
            store.add(results)
            done += len(results)
    finally:
        if pool:
            pool.shutdown(wait=True, cancel_futures=True)

    labeled = []
    for traj in dataset.trajectories:
        idx = [store.entries[state_key(s, space)]["resolved_index"] for s in traj.states]
        labels = np.zeros((len(idx), space.k))
        labels[np.arange(len(idx)), idx] = 1.0
        labeled.append(Trajectory(states=traj.states, actions=traj.actions, labels=labels, success=traj.success))
    return DemoDataset(kind=dataset.kind, trajectories=labeled, order=dataset.order)
