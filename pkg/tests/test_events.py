import json
import threading
import time

import pytest
import zmq
from pydantic import ValidationError

from sms_verify.events import (
    NullEventOptions,
    NullEventPublisher,
    ZmqEventOptions,
    ZmqEventSubOptions,
    get_event_publisher,
    get_event_subscriber,
)
from sms_verify.events.backends.pub_zmq import ZmqEventPublisher
from sms_verify.events.backends.sub_zmq import ZmqEventSubscriber
from sms_verify.schemas import RunEvent, StageStatus, parse_record_json


def create_event(stage: str, status: StageStatus = StageStatus.FINISHED) -> RunEvent:
    """
    Helper to create a RunEvent for testing.

    Attributes:
        stage: pipeline stage the event reports on.
    """
    return RunEvent(run_id="abc123def456", stage=stage, status=status, metrics={"accuracy": 0.9})


# --- Schema ---


def test_event_timestamp_format():
    event = create_event("train")
    data = json.loads(event.model_dump_json())
    assert len(data["timestamp"]) == len("2026-01-01 00:00:00")
    parsed = parse_record_json(event.model_dump_json(), "event")
    assert parsed.stage == "train"
    assert parsed.status is StageStatus.FINISHED


def test_event_rejects_unknown_status():
    with pytest.raises(ValidationError):
        RunEvent(run_id="x", stage="train", status="exploded")


def test_parse_record_json_unknown_type():
    with pytest.raises(ValueError, match="Unexpected expected_type"):
        parse_record_json("{}", "nope")


# --- Factories ---


def test_factory_returns_backends():
    assert isinstance(get_event_publisher(NullEventOptions()), NullEventPublisher)
    pub = get_event_publisher(ZmqEventOptions(endpoint="tcp://127.0.0.1:5570", topic="run"))
    assert isinstance(pub, ZmqEventPublisher)
    assert (pub.endpoint, pub.topic, pub.is_connect) == ("tcp://127.0.0.1:5570", "run", True)
    sub = get_event_subscriber(ZmqEventSubOptions(timeout_ms=100))
    assert isinstance(sub, ZmqEventSubscriber)
    assert sub.topics == [""]


def test_null_publisher_assigns_sequence_numbers():
    with NullEventPublisher() as pub:
        first, second = create_event("data"), create_event("seed")
        pub.publish(first)
        pub.publish(second)
    assert (first.sequence_no, second.sequence_no) == (0, 1)


def test_publish_raw_requires_str():
    with pytest.raises(TypeError):
        NullEventPublisher().publish_raw(b"bytes")


def test_publish_without_connect_fails():
    pub = ZmqEventPublisher(endpoint="tcp://127.0.0.1:5571")
    with pytest.raises(ConnectionError, match="Not connected"):
        pub.publish(create_event("data"))


def test_publishers_open_only_through_with():
    assert not hasattr(NullEventPublisher(), "connect")
    assert not hasattr(ZmqEventPublisher(), "connect")


def test_failed_publish_keeps_the_sequence_number():
    pub = ZmqEventPublisher(endpoint="tcp://127.0.0.1:5572")
    event = create_event("data")
    with pytest.raises(ConnectionError):
        pub.publish(event)
    assert pub._seq_no == 0


def test_subscriber_times_out_without_events():
    ctx = zmq.Context()
    try:
        with ZmqEventSubscriber("tcp://127.0.0.1:5572", timeout_ms=100, context=ctx) as sub:
            assert list(sub) == []
    finally:
        ctx.term()


# --- One-process pub/sub ---


def test_zmq_events_roundtrip_in_one_process():
    """
    Integration test for ZMQ PUB/SUB of run events using threading.
    """
    endpoint = "tcp://127.0.0.1:5566"
    received = []
    shared_ctx = zmq.Context()

    try:

        def run_subscriber():
            sub_opts = ZmqEventSubOptions(
                endpoint=endpoint,
                is_bind=True,
                topics=["run "],
                timeout_ms=2000,
                context=shared_ctx,
            )
            with get_event_subscriber(sub_opts) as sub:
                for event in sub:
                    received.append(event)
                    if len(received) == 2:
                        break

        sub_thread = threading.Thread(target=run_subscriber)
        sub_thread.start()

        # Wait for the subscriber to bind
        time.sleep(0.2)

        pub_opts = ZmqEventOptions(endpoint=endpoint, topic="run", context=shared_ctx)
        with get_event_publisher(pub_opts) as pub:
            # slow joiner: let the subscription reach the publisher
            time.sleep(0.5)
            pub.publish_raw("run {not json")
            pub.publish(create_event("data", StageStatus.STARTED))
            pub.publish(create_event("data"))

        sub_thread.join(timeout=5)
        assert not sub_thread.is_alive()
    finally:
        shared_ctx.term()

    assert [(e.stage, e.status) for e in received] == [
        ("data", StageStatus.STARTED),
        ("data", StageStatus.FINISHED),
    ]
    assert [e.sequence_no for e in received] == [0, 1]
    assert received[0].metrics == {"accuracy": 0.9}
