# src/sms_verify/events/sub_factory.py
from typing import List, Literal

import zmq
from pydantic import BaseModel, ConfigDict, Field

from .backends.sub_zmq import ZmqEventSubscriber
from .sub_base import BaseEventSubscriber


class ZmqEventSubOptions(BaseModel):
    """
    Configuration options for the ZeroMQ event subscriber.

    Attributes:
        backend_type: Fixed literal for ZMQ backend.
        endpoint: ZMQ connection string (e.g., tcp://*:5556).
        topics: topic prefixes to subscribe to.
        is_bind: Whether to bind or connect to the endpoint.
        timeout_ms: stop iterating after this long without events; None blocks forever.
        hwm: SUB socket receive high water mark.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    backend_type: Literal["zmq"] = "zmq"
    endpoint: str = "tcp://*:5556"
    topics: List[str] = Field(default_factory=lambda: [""])
    is_bind: bool = True
    timeout_ms: int | None = Field(default=None, gt=0)
    hwm: int = 1000
    context: zmq.Context | None = None


def get_event_subscriber(options: ZmqEventSubOptions) -> BaseEventSubscriber:
    """
    Factory method to create an event subscriber.

    Args:
        options: Configuration object for the chosen backend.
    """
    if options.backend_type == "zmq":
        return ZmqEventSubscriber(
            endpoint=options.endpoint,
            is_bind=options.is_bind,
            topics=options.topics,
            timeout_ms=options.timeout_ms,
            context=options.context,
            hwm=options.hwm,
        )
    else:
        raise ValueError(f"Unknown backend type: {options.backend_type}")
