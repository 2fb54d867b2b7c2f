# src/sms_verify/events/pub_base.py
import logging
from abc import ABC, abstractmethod

from ..schemas import RunEvent

logger = logging.getLogger(__name__)


class BaseEventPublisher(ABC):
    """
    Interface for publishing run-progress events.

    Note:
        Publishers are opened and closed by the `with` statement only.
    """

    def __init__(self):
        self._seq_no = 0

    def __enter__(self):
        self._open()
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.close()

    @abstractmethod
    def _open(self):
        """Acquire the transport."""

    def publish(self, event: RunEvent):
        """Publish a validated event; a zero `sequence_no` is replaced by the next number."""
        if event.sequence_no == 0:
            event.sequence_no = self._seq_no
        logger.debug(f"Publishing event {event.sequence_no} ({event.stage}: {event.status})")
        try:
            self.publish_raw(event.model_dump_json())
        except Exception as e:
            logger.error(f"Failed to publish {event.stage} event: {e}")
            raise
        self._seq_no += 1

    @abstractmethod
    def publish_raw(self, data: str):
        """Send a raw string directly; runs only publish `RunEvent`s through `publish`."""

    @abstractmethod
    def close(self):
        """Release the transport."""


class NullEventPublisher(BaseEventPublisher):
    """Publisher used when no event endpoint is configured; drops everything."""

    def _open(self):
        pass

    def publish_raw(self, data: str):
        if not isinstance(data, str):
            raise TypeError(f"Payload must be str! Received: {type(data)}")

    def close(self):
        pass
