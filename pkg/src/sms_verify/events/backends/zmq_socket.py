# src/sms_verify/events/backends/zmq_socket.py
import logging

import zmq

logger = logging.getLogger(__name__)


class ZmqSocketOwner:
    """
    Socket lifecycle shared by the PUB and SUB event backends.

    Attributes:
        endpoint: ZMQ endpoint string.
        hwm: high water mark applied to the socket's queue.
        ctx: ZMQ context, created on first open when none was shared.
        is_own_context: True when ctx is created (and later terminated) here.
    """

    def _init_socket_owner(self, endpoint: str, context: zmq.Context | None, hwm: int):
        self.endpoint = endpoint
        self.hwm = hwm
        self.ctx = context
        self.is_own_context: bool = context is None
        self.socket: zmq.Socket | None = None

    @property
    def is_open(self) -> bool:
        return self.socket is not None and not self.socket.closed

    def _open_socket(self, kind: int, bind: bool, **options: int):
        """Create a socket of `kind`, apply options, then bind or connect it."""
        if self.ctx is None:
            self.ctx = zmq.Context()
        socket = self.ctx.socket(kind)
        for name, value in options.items():
            socket.setsockopt(getattr(zmq, name), value)
        try:
            if bind:
                socket.bind(self.endpoint)
            else:
                socket.connect(self.endpoint)
        except zmq.ZMQError as e:
            socket.close(linger=0)
            raise ConnectionError(f"cannot {'bind' if bind else 'connect'} {self.endpoint}: {e}") from e
        logger.info(f"{type(self).__name__} {'bound to' if bind else 'connected to'} {self.endpoint}")
        self.socket = socket
        return socket

    def close(self):
        """Close the socket; terminate the context only when it is owned here."""
        if self.socket is not None:
            self.socket.close(linger=0)
            self.socket = None
        if self.ctx is not None and self.is_own_context:
            self.ctx.term()
            self.ctx = None
