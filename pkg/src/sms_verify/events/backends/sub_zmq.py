# src/sms_verify/events/backends/sub_zmq.py
import logging
from typing import Iterator

import zmq
from pydantic import ValidationError

from ...schemas import RunEvent, parse_record_json
from ..sub_base import BaseEventSubscriber
from .zmq_socket import ZmqSocketOwner

logger = logging.getLogger(__name__)


def _strip_topic(raw_msg: str) -> str:
    """Return the JSON part of `topic + space + json`, or raw_msg if already JSON."""
    if raw_msg.lstrip().startswith("{"):
        return raw_msg
    _, sep, payload = raw_msg.partition(" ")
    return payload if sep and payload.lstrip().startswith("{") else raw_msg


class ZmqEventSubscriber(ZmqSocketOwner, BaseEventSubscriber):
    """
    ZeroMQ SUB socket yielding parsed RunEvents.

    Attributes:
        is_bind: Whether to bind (True) or connect (False).
        topics: topic prefixes to subscribe to; [""] receives everything.
        timeout_ms: iteration ends after this long without an event; None blocks.
    """

    def __init__(
        self,
        endpoint: str,
        is_bind: bool = True,
        topics: list[str] | None = None,
        timeout_ms: int | None = None,
        context: zmq.Context | None = None,
        hwm: int = 1000,
    ):
        self._init_socket_owner(endpoint, context, hwm)
        self.is_bind = is_bind
        self.topics = topics or [""]
        self.timeout_ms = timeout_ms
        self._running = True

    def connect(self):
        if self.is_open:
            return
        options = {"RCVHWM": self.hwm}
        if self.timeout_ms is not None:
            options["RCVTIMEO"] = self.timeout_ms
        try:
            socket = self._open_socket(zmq.SUB, bind=self.is_bind, **options)
        except ConnectionError as e:
            raise ConnectionError(f"{e}. Is another watcher already bound to this address?") from e
        for topic in self.topics:
            socket.subscribe(topic)

    def __iter__(self) -> Iterator[RunEvent]:
        """Blocking generator of events; stops on close or receive timeout."""
        self.connect()
        while self._running:
            try:
                raw_msg = self.socket.recv_string()
            except zmq.Again:
                logger.info(f"no event within {self.timeout_ms} ms, stopping")
                return
            except zmq.ZMQError:
                return
            try:
                yield parse_record_json(_strip_topic(raw_msg), expected_type="event")
            except ValidationError as e:
                logger.warning(f"Skipping malformed event: {e}")

    def close(self):
        self._running = False
        super().close()
