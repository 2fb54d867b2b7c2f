# src/sms_verify/events/backends/pub_zmq.py
import logging

import zmq

from ..pub_base import BaseEventPublisher
from .zmq_socket import ZmqSocketOwner

logger = logging.getLogger(__name__)


class ZmqEventPublisher(ZmqSocketOwner, BaseEventPublisher):
    """
    ZeroMQ PUB socket for run events.

    Attributes:
        is_connect: If True, performs 'connect'. If False, performs 'bind'.
        topic: prefix sent before every event (usually the run id); "" sends bare JSON.

    Note:
        Events past the send high water mark are dropped by ZMQ, which keeps a
        slow or absent watcher from stalling a run.
    """

    def __init__(
        self,
        endpoint: str = "tcp://localhost:5556",
        is_connect: bool = True,
        topic: str = "",
        context: zmq.Context | None = None,
        hwm: int = 1000,
    ):
        super().__init__()
        self._init_socket_owner(endpoint, context, hwm)
        self.is_connect = is_connect
        self.topic = topic

    def _open(self):
        if self.is_open:
            logger.warning(f"Already connected to {self.endpoint}")
            return
        self._open_socket(zmq.PUB, bind=not self.is_connect, SNDHWM=self.hwm)

    def publish_raw(self, data: str):
        if not isinstance(data, str):
            raise TypeError(f"Payload must be str! Received: {type(data)}")
        if not self.is_open:
            logger.error("Attempted to publish but socket is not connected.")
            raise ConnectionError("Not connected. Use the publisher as a context manager.")
        self.socket.send_string(f"{self.topic} {data}" if self.topic else data)
