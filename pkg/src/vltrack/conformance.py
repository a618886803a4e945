"""Wire-protocol conformance checks for shim servers.

Drives every endpoint with fixture payloads and validates each response
against the shared JSON schemas committed under schemas/, plus the shape and
range rules the schemas cannot express (matrix dimensions, vector length vs
the /info handshake). Returns a list of problems; empty means conformant.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import requests

DEFAULT_TIMEOUT = 30.0


def _load(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


class ShimConformance:
    def __init__(self, base_url: str, schemas_dir, fixtures_path,
                 timeout: float = DEFAULT_TIMEOUT):
        self.base = base_url.rstrip("/")
        self.schemas_dir = Path(schemas_dir)
        self.fixtures = _load(Path(fixtures_path))
        self.timeout = timeout
        self.problems: list[str] = []

    def _schema(self, name: str) -> dict:
        return _load(self.schemas_dir / f"{name}.schema.json")

    def _fail(self, endpoint: str, message: str) -> None:
        self.problems.append(f"{endpoint}: {message}")

    def _call(self, method: str, path: str, payload=None):
        url = self.base + path
        resp = requests.request(method, url, json=payload, timeout=self.timeout)
        return resp

    def _validated(self, endpoint: str, schema_name: str, payload=None,
                   method: str = "POST"):
        resp = self._call(method, endpoint, payload)
        if resp.status_code != 200:
            self._fail(endpoint, f"HTTP {resp.status_code}")
            return None
        try:
            data = resp.json()
        except ValueError:
            self._fail(endpoint, "non-JSON response")
            return None
        try:
            jsonschema.validate(data, self._schema(schema_name))
        except jsonschema.ValidationError as exc:
            self._fail(endpoint, f"schema violation: {exc.message}")
            return None
        return data

    # -- endpoint checks ----------------------------------------------------

    def check_info(self) -> int:
        first = self._validated("/info", "info_response", method="GET")
        again = self._validated("/info", "info_response", method="GET")
        if first and again and first != again:
            self._fail("/info", "not idempotent: two GETs differ")
        return int(first["dim"]) if first else 0

    def check_embed(self, dim: int) -> None:
        img_payload = {"image_b64": self.fixtures["image_b64"]}
        data = self._validated("/embed_image", "embed_response", img_payload)
        if data and dim and len(data["vector"]) != dim:
            self._fail("/embed_image", f"vector length {len(data['vector'])} != dim {dim}")
        data = self._validated("/embed_text", "embed_response",
                               {"text": self.fixtures["text"]})
        if data and dim and len(data["vector"]) != dim:
            self._fail("/embed_text", f"vector length {len(data['vector'])} != dim {dim}")

    def check_ground(self) -> None:
        payload = {"image_b64": self.fixtures["image_b64"],
                   "caption": self.fixtures["caption"]}
        data = self._validated("/ground", "ground_response", payload)
        if not data:
            return
        n, m = len(data["boxes"]), len(data["tokens"])
        if len(data["scores"]) != n:
            self._fail("/ground", f"{len(data['scores'])} score rows for {n} boxes")
            return
        for row in data["scores"]:
            if len(row) != m:
                self._fail("/ground", f"score row length {len(row)} != {m} tokens")
                return
            for v in row:
                if not 0.0 <= v <= 1.0:
                    self._fail("/ground", f"score {v} outside [0,1]")
                    return

    def check_tracker(self) -> None:
        init_payload = {"image_b64": self.fixtures["image_b64"],
                        "box": self.fixtures["box"]}
        data = self._validated("/init", "track_init_response", init_payload)
        if not data:
            return
        predict_payload = {"session": data["session"],
                           "image_b64": self.fixtures["image_b64"]}
        self._validated("/predict", "track_predict_response", predict_payload)

    def check_rejects_malformed(self) -> None:
        for endpoint in ("/ground", "/embed_image", "/embed_text", "/init", "/predict"):
            resp = self._call("POST", endpoint, {"nonsense": 1})
            if resp.status_code != 400:
                self._fail(endpoint, f"malformed payload got HTTP {resp.status_code}, want 400")

    def run(self) -> list[str]:
        dim = self.check_info()
        self.check_embed(dim)
        self.check_ground()
        self.check_tracker()
        self.check_rejects_malformed()
        return self.problems


def run_conformance(base_url: str, schemas_dir, fixtures_path) -> list[str]:
    return ShimConformance(base_url, schemas_dir, fixtures_path).run()
