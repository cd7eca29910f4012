"""Golden-file conformance runner.

A transport is any callable ``(method, path, payload) -> (status, body)``
where body is the decoded JSON object. The runner replays each golden
request through the transport and checks the structural expectations
recorded in the golden file:

* ``status``: exact HTTP status code
* ``schema``: one of ``info`` / ``text_embeddings`` / ``audio_embedding``
  / ``error``; field types and embedding sizes are validated against the
  backend's own /v1/info
* ``rows``: expected number of text embeddings
* ``identical_rows``: pairs of row indices that must match exactly
* ``repeat`` + ``repeat_identical``: send the request N times and demand
  byte-identical canonical JSON responses
"""

from __future__ import annotations

import json
import math
import os
from importlib import resources

_GOLDEN_PACKAGE = "fxsearcher.conformance"


def load_goldens(goldens_dir=None) -> list:
    """Golden descriptions, sorted by name for stable report order."""
    docs = []
    if goldens_dir is not None:
        for fname in sorted(os.listdir(goldens_dir)):
            if fname.endswith(".json"):
                with open(os.path.join(goldens_dir, fname), "r", encoding="utf-8") as fh:
                    docs.append(json.load(fh))
    else:
        root = resources.files(_GOLDEN_PACKAGE) / "goldens"
        for entry in sorted(root.iterdir(), key=lambda e: e.name):
            if entry.name.endswith(".json"):
                docs.append(json.loads(entry.read_text(encoding="utf-8")))
    if not docs:
        raise FileNotFoundError("no conformance goldens found")
    return docs


def _is_finite_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_vector(vec, dim, where, failures):
    if not isinstance(vec, list) or len(vec) != dim:
        failures.append(f"{where}: expected a list of {dim} floats")
        return
    if not all(_is_finite_number(v) for v in vec):
        failures.append(f"{where}: embedding contains non-finite or non-numeric entries")


def _check_schema(schema, golden, body, info, failures, name):
    if schema == "info":
        for key, kind in (("embedding_dim", int), ("sample_rate", int), ("model_id", str)):
            if not isinstance(body.get(key), kind) or isinstance(body.get(key), bool):
                failures.append(f"{name}: /v1/info field {key} missing or mistyped")
                return
        if body["embedding_dim"] <= 0 or body["sample_rate"] <= 0 or not body["model_id"]:
            failures.append(f"{name}: /v1/info values out of range")
    elif schema == "text_embeddings":
        rows = body.get("embeddings")
        expected = golden.get("rows")
        if not isinstance(rows, list) or (expected is not None and len(rows) != expected):
            failures.append(f"{name}: expected {expected} embeddings, got "
                            f"{len(rows) if isinstance(rows, list) else type(rows).__name__}")
            return
        for i, row in enumerate(rows):
            _check_vector(row, info["embedding_dim"], f"{name}: embeddings[{i}]", failures)
        for i, j in golden.get("identical_rows", []):
            if rows[i] != rows[j]:
                failures.append(f"{name}: rows {i} and {j} differ for identical texts")
    elif schema == "audio_embedding":
        _check_vector(body.get("embedding"), info["embedding_dim"], f"{name}: embedding", failures)
    elif schema == "error":
        if not isinstance(body.get("error"), str) or not body["error"]:
            failures.append(f"{name}: error responses must carry a non-empty 'error' string")
    else:
        failures.append(f"{name}: golden names unknown schema {schema!r}")


def run_conformance(transport, goldens_dir=None) -> list:
    """Replay all goldens; returns a list of failure strings (empty = pass)."""
    failures: list = []
    status, info = transport("GET", "/v1/info", None)
    if status != 200:
        return [f"/v1/info probe returned {status}; cannot run suite"]

    for golden in load_goldens(goldens_dir):
        name = golden["name"]
        req = golden["request"]
        expect = golden["expect"]
        repeats = max(1, int(golden.get("repeat", 1)))
        responses = []
        for _ in range(repeats):
            try:
                status, body = transport(req["method"], req["path"], req.get("payload"))
            except Exception as exc:
                failures.append(f"{name}: transport raised {type(exc).__name__}: {exc}")
                break
            responses.append((status, body))
        else:
            status, body = responses[0]
            if status != expect["status"]:
                failures.append(f"{name}: expected status {expect['status']}, got {status}")
                continue
            if not isinstance(body, dict):
                failures.append(f"{name}: response body is not a JSON object")
                continue
            if "schema" in expect:
                _check_schema(expect["schema"], expect, body, info, failures, name)
            if expect.get("repeat_identical") and len(responses) > 1:
                canon = [json.dumps(b, sort_keys=True) for _, b in responses]
                if any(c != canon[0] for c in canon[1:]):
                    failures.append(f"{name}: repeated identical requests returned different bodies")
    return failures


def assert_conformance(transport, goldens_dir=None) -> None:
    failures = run_conformance(transport, goldens_dir)
    if failures:
        raise AssertionError(
            f"{len(failures)} conformance failure(s):\n" + "\n".join(f"  - {f}" for f in failures)
        )
