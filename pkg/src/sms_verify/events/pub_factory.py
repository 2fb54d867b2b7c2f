# src/sms_verify/events/pub_factory.py
from typing import Literal, Union

import zmq
from pydantic import BaseModel, ConfigDict

from .backends.pub_zmq import ZmqEventPublisher
from .pub_base import BaseEventPublisher, NullEventPublisher


class ZmqEventOptions(BaseModel):
    """
    Configuration options for the ZeroMQ event publisher.

    Attributes:
        backend_type: Fixed literal for ZMQ backend.
        endpoint: ZMQ connection string.
        is_connect: If True, uses 'connect'; if False, uses 'bind'.
        topic: topic prefix for all events. Empty string disables it.
        context: Optional shared ZMQ context.
        hwm: PUB socket send high water mark.

    Note:
        Runs usually connect; a long-lived `watch` binds.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    backend_type: Literal["zmq"] = "zmq"
    endpoint: str = "tcp://localhost:5556"
    is_connect: bool = True
    topic: str = ""
    context: zmq.Context | None = None
    hwm: int = 1000


class NullEventOptions(BaseModel):
    """No event bus; events are dropped."""

    backend_type: Literal["null"] = "null"


EventPublisherOptions = Union[ZmqEventOptions, NullEventOptions]


def get_event_publisher(options: EventPublisherOptions) -> BaseEventPublisher:
    """
    Factory method to create an event publisher.

    Args:
        options: Configuration object for the chosen backend.
    """
    if options.backend_type == "zmq":
        return ZmqEventPublisher(
            endpoint=options.endpoint,
            is_connect=options.is_connect,
            topic=options.topic,
            context=options.context,
            hwm=options.hwm,
        )
    elif options.backend_type == "null":
        return NullEventPublisher()
    else:
        raise ValueError(f"Unknown backend type: {options.backend_type}")
