"""Parsing, validation, and serialization of DevTools-protocol messages.

Messages are JSON objects classified into commands, responses, and events.
Serialization uses a fixed key order (id, method, params, result, error,
sessionId, then unknown keys in original order) so audit logs stay diffable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

MAX_MESSAGE_BYTES = 1 << 20  # hard input bound; larger frames are rejected

_METHOD_RE = re.compile(r"^[A-Za-z]+\.[A-Za-z0-9]+$")


class CodecError(ValueError):
    """Base class for message codec failures."""


class MalformedJson(CodecError):
    pass


class AmbiguousShape(CodecError):
    pass


class BadMethod(CodecError):
    pass


class NonPositiveId(CodecError):
    pass


class MessageKind(Enum):
    COMMAND = "command"
    RESPONSE = "response"
    EVENT = "event"


@dataclass(frozen=True)
class CdpMessage:
    """One protocol frame: a command, a response, or an event.

    ``extra`` holds unknown top-level keys verbatim so frames from newer
    protocol revisions survive a parse/serialize round trip.
    """

    kind: MessageKind
    id: Optional[int] = None
    method: Optional[str] = None
    params: Optional[dict] = None
    result: Optional[dict] = None
    error: Optional[dict] = None
    session_id: Optional[str] = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def command(
        cls,
        id: int,
        method: str,
        params: Optional[dict] = None,
        session_id: Optional[str] = None,
    ) -> "CdpMessage":
        _check_id(id)
        _check_method(method)
        return cls(MessageKind.COMMAND, id=id, method=method, params=params, session_id=session_id)

    @classmethod
    def response(
        cls,
        id: int,
        result: Optional[dict] = None,
        error: Optional[dict] = None,
        session_id: Optional[str] = None,
    ) -> "CdpMessage":
        _check_id(id)
        if (result is None) == (error is None):
            raise AmbiguousShape("response carries exactly one of result/error")
        if error is not None:
            _check_error(error)
        return cls(MessageKind.RESPONSE, id=id, result=result, error=error, session_id=session_id)

    @classmethod
    def event(
        cls,
        method: str,
        params: Optional[dict] = None,
        session_id: Optional[str] = None,
    ) -> "CdpMessage":
        _check_method(method)
        return cls(MessageKind.EVENT, method=method, params=params, session_id=session_id)


_KNOWN_KEYS = ("id", "method", "params", "result", "error", "sessionId")


def _check_id(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise NonPositiveId(f"id must be a positive integer, got {value!r}")
    return value


def _check_method(value: Any) -> str:
    if not isinstance(value, str) or not _METHOD_RE.match(value):
        raise BadMethod(f"method must match Domain.command, got {value!r}")
    return value


def _check_object(value: Any, name: str) -> dict:
    if not isinstance(value, dict):
        raise AmbiguousShape(f"{name} must be a JSON object, got {type(value).__name__}")
    return value


def _check_error(value: Any) -> dict:
    err = _check_object(value, "error")
    if isinstance(err.get("code"), bool) or not isinstance(err.get("code"), int):
        raise AmbiguousShape("error.code must be an integer")
    if not isinstance(err.get("message"), str):
        raise AmbiguousShape("error.message must be a string")
    return err


def parse_message(text: "str | bytes") -> CdpMessage:
    """Parse one UTF-8 JSON frame into a classified message.

    Raises MalformedJson, AmbiguousShape, BadMethod, or NonPositiveId; never
    anything else, for arbitrary byte input up to the size bound.
    """
    if isinstance(text, (bytes, bytearray)):
        if len(text) > MAX_MESSAGE_BYTES:
            raise MalformedJson(f"frame exceeds {MAX_MESSAGE_BYTES} bytes")
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedJson(f"frame is not valid UTF-8: {exc}") from exc
    elif len(text.encode("utf-8", errors="surrogatepass")) > MAX_MESSAGE_BYTES:
        raise MalformedJson(f"frame exceeds {MAX_MESSAGE_BYTES} bytes")

    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, RecursionError, ValueError) as exc:
        raise MalformedJson(f"frame is not JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise AmbiguousShape(f"frame must be a JSON object, got {type(obj).__name__}")

    has_id = "id" in obj
    has_method = "method" in obj
    has_result = "result" in obj
    has_error = "error" in obj

    session_id = obj.get("sessionId")
    if "sessionId" in obj and not isinstance(session_id, str):
        raise AmbiguousShape("sessionId must be a string")
    extra = {k: v for k, v in obj.items() if k not in _KNOWN_KEYS}

    if has_method and (has_result or has_error):
        raise AmbiguousShape("frame mixes method with result/error")

    if has_id:
        msg_id = _check_id(obj["id"])
        if has_method:
            method = _check_method(obj["method"])
            params = _check_object(obj["params"], "params") if "params" in obj else None
            return CdpMessage(
                MessageKind.COMMAND,
                id=msg_id,
                method=method,
                params=params,
                session_id=session_id,
                extra=extra,
            )
        if has_result and has_error:
            raise AmbiguousShape("response carries both result and error")
        if has_result or has_error:
            if "params" in obj:
                raise AmbiguousShape("responses do not carry params")
            result = _check_object(obj["result"], "result") if has_result else None
            error = _check_error(obj["error"]) if has_error else None
            return CdpMessage(
                MessageKind.RESPONSE,
                id=msg_id,
                result=result,
                error=error,
                session_id=session_id,
                extra=extra,
            )
        raise AmbiguousShape("frame has id but neither method nor result/error")

    if has_method:
        method = _check_method(obj["method"])
        if has_result or has_error:
            raise AmbiguousShape("events do not carry result/error")
        params = _check_object(obj["params"], "params") if "params" in obj else None
        return CdpMessage(
            MessageKind.EVENT, method=method, params=params, session_id=session_id, extra=extra
        )

    raise AmbiguousShape("frame has neither id nor method")


def serialize_message(message: CdpMessage) -> str:
    """Serialize a message with fixed key order, omitting absent fields."""
    out: dict = {}
    if message.id is not None:
        out["id"] = message.id
    if message.method is not None:
        out["method"] = message.method
    if message.params is not None:
        out["params"] = message.params
    if message.result is not None:
        out["result"] = message.result
    if message.error is not None:
        out["error"] = message.error
    if message.session_id is not None:
        out["sessionId"] = message.session_id
    out.update(message.extra)
    return json.dumps(out, separators=(",", ":"), ensure_ascii=False)


def split_method(method: str) -> tuple[str, str]:
    """Split "Domain.command" into its two parts."""
    _check_method(method)
    domain, _, command = method.partition(".")
    return domain, command
