"""HTTP clients for the four model wire protocols.

Wire formats:
  - chat:    POST {base}/v1/chat/completions, OpenAI-compatible body
  - ground:  POST {base}/ground {image_b64, caption}
             -> {tokens, boxes [[x0,y0,x1,y1]], scores NxM in [0,1]}
  - tracker: POST {base}/init {image_b64, box:[x,y,w,h]} -> {session}
             POST {base}/predict {session, image_b64} -> {box, score}
  - embed:   POST {base}/embed_image {image_b64} / {base}/embed_text {text}
             -> {vector}; GET {base}/info -> {dim}

Transport and timeout failures are retried with exponential backoff;
4xx rejections are not.
"""

from __future__ import annotations

import os
import time
from typing import Optional

import numpy as np
import requests

from ..geometry import BBox, encode_png_base64, resize_to_fit, validate_image
from .base import (
    ChatRequest,
    GroundingResult,
    ProtocolViolation,
    Rejected,
    SessionLost,
    Timeout,
    Transport,
    check_vector,
)

DEFAULT_TIMEOUT = 60.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 1.0


class _HttpClient:
    """Shared request plumbing: session reuse, retries, error mapping."""

    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT,
                 retries: int = DEFAULT_RETRIES, backoff: float = DEFAULT_BACKOFF,
                 headers: Optional[dict] = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = max(1, retries)
        self.backoff = backoff
        self._session = requests.Session()
        if headers:
            self._session.headers.update(headers)

    def request(self, method: str, path: str, payload: Optional[dict] = None) -> dict:
        url = self.base_url + path
        last: Exception = Transport(f"no attempt made for {url}")
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self._session.request(method, url, json=payload, timeout=self.timeout)
            except requests.Timeout as exc:
                last = Timeout(f"{url}: {exc}")
                continue
            except requests.RequestException as exc:
                last = Transport(f"{url}: {exc}")
                continue
            if 400 <= resp.status_code < 500:
                raise Rejected(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
            if resp.status_code >= 500:
                last = Transport(f"{url}: HTTP {resp.status_code}")
                continue
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolViolation(f"{url}: non-JSON response: {exc}")
        raise last


class HttpChatBackend:
    """OpenAI-compatible chat-completions client with data-URL image input."""

    def __init__(self, base_url: str, model: str = "default",
                 api_key_env: str = "OPENAI_API_KEY", max_image_edge: int = 1024,
                 **client_kwargs):
        headers = {}
        key = os.environ.get(api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = _HttpClient(base_url, headers=headers, **client_kwargs)
        self.model = model
        self.max_image_edge = max_image_edge

    def complete(self, req: ChatRequest) -> str:
        content: list[dict] = [{"type": "text", "text": req.prompt}]
        if req.image is not None:
            img = resize_to_fit(validate_image(req.image), self.max_image_edge)
            content.append({
                "type": "image_url",
                "image_url": {"url": "data:image/png;base64," + encode_png_base64(img)},
            })
        body = {
            "model": self.model,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": content}],
        }
        data = self._client.request("POST", "/v1/chat/completions", body)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolViolation(f"chat response missing choices[0].message.content: {exc}")
        if not isinstance(text, str):
            raise ProtocolViolation("chat message content is not a string")
        return text


class HttpGroundingBackend:
    """Client for the grounding wire protocol; corners converted to (x,y,w,h)."""

    def __init__(self, base_url: str, **client_kwargs):
        self._client = _HttpClient(base_url, **client_kwargs)

    def ground(self, img: np.ndarray, caption: str) -> GroundingResult:
        if not caption:
            raise ValueError("caption must be non-empty")
        payload = {"image_b64": encode_png_base64(validate_image(img)), "caption": caption}
        data = self._client.request("POST", "/ground", payload)
        try:
            tokens = [str(t) for t in data["tokens"]]
            raw_boxes = data["boxes"]
            scores = np.asarray(data["scores"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"malformed grounding response: {exc}")
        proposals = []
        for corners in raw_boxes:
            if len(corners) != 4:
                raise ProtocolViolation(f"box must have 4 corner values, got {corners!r}")
            x0, y0, x1, y1 = (float(v) for v in corners)
            try:
                proposals.append(BBox.from_xyxy(x0, y0, x1, y1))
            except ValueError as exc:
                raise ProtocolViolation(f"invalid proposal box {corners!r}: {exc}")
        return GroundingResult(tokens, proposals, scores).validate()


class HttpTrackerBackend:
    """Client for the tracker wire protocol; holds the session token."""

    def __init__(self, base_url: str, **client_kwargs):
        self._client = _HttpClient(base_url, **client_kwargs)
        self._session_id: Optional[str] = None

    def init(self, frame: np.ndarray, box: BBox) -> None:
        payload = {
            "image_b64": encode_png_base64(validate_image(frame)),
            "box": list(box.as_tuple()),
        }
        data = self._client.request("POST", "/init", payload)
        session = data.get("session")
        if not session:
            raise ProtocolViolation("tracker /init response missing session")
        self._session_id = str(session)

    def predict(self, frame: np.ndarray) -> tuple[BBox, float]:
        if self._session_id is None:
            raise SessionLost("tracker predict called before init")
        payload = {
            "session": self._session_id,
            "image_b64": encode_png_base64(validate_image(frame)),
        }
        data = self._client.request("POST", "/predict", payload)
        try:
            x, y, w, h = (float(v) for v in data["box"])
            score = float(data["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"malformed tracker response: {exc}")
        if not 0.0 <= score <= 1.0:
            raise ProtocolViolation(f"tracker confidence outside [0,1]: {score}")
        try:
            box = BBox(x, y, w, h)
        except ValueError as exc:
            raise ProtocolViolation(f"invalid tracker box: {exc}")
        return box, score


class HttpEmbeddingBackend:
    """Client for the embedding wire protocol; /info handshake cached."""

    def __init__(self, base_url: str, **client_kwargs):
        self._client = _HttpClient(base_url, **client_kwargs)
        self._dim: Optional[int] = None

    @property
    def dim(self) -> Optional[int]:
        if self._dim is None:
            data = self._client.request("GET", "/info")
            try:
                self._dim = int(data["dim"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolViolation(f"malformed /info response: {exc}")
        return self._dim

    def embed_image(self, img: np.ndarray) -> np.ndarray:
        payload = {"image_b64": encode_png_base64(validate_image(img))}
        data = self._client.request("POST", "/embed_image", payload)
        return self._vector(data)

    def embed_text(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("text must be non-empty")
        data = self._client.request("POST", "/embed_text", {"text": text})
        return self._vector(data)

    def _vector(self, data: dict) -> np.ndarray:
        if "vector" not in data:
            raise ProtocolViolation("embedding response missing vector")
        return check_vector(data["vector"], self.dim)
