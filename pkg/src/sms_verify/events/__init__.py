# src/sms_verify/events/__init__.py

# 1. Publishers
from .pub_base import BaseEventPublisher, NullEventPublisher
from .pub_factory import EventPublisherOptions, NullEventOptions, ZmqEventOptions, get_event_publisher

# 2. Subscribers
from .sub_base import BaseEventSubscriber
from .sub_factory import ZmqEventSubOptions, get_event_subscriber

__all__ = [
    "BaseEventPublisher",
    "NullEventPublisher",
    "EventPublisherOptions",
    "NullEventOptions",
    "ZmqEventOptions",
    "get_event_publisher",
    "BaseEventSubscriber",
    "ZmqEventSubOptions",
    "get_event_subscriber",
]
