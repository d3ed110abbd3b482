"""In-process typed publish/subscribe bus.

Each node owns one bounded inbox; a subscription tags the messages it
delivers so a node can tell its inputs apart (including two subscriptions to
the same topic). Delivery into each inbox preserves publish order. A full
inbox blocks the publisher, which is the backpressure mechanism.
"""
from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field
from typing import Any

DEFAULT_QUEUE_SIZE = 256


@dataclass(frozen=True)
class EndOfStream:
    source: str = ""


@dataclass
class Topic:
    name: str
    msg_type: type
    subscribers: list[tuple[queue.Queue, str]] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class Bus:
    def __init__(self) -> None:
        self._topics: dict[str, Topic] = {}
        self._lock = threading.Lock()

    def advertise(self, name: str, msg_type: type) -> Topic:
        with self._lock:
            topic = self._topics.get(name)
            if topic is None:
                topic = self._topics[name] = Topic(name, msg_type)
            elif topic.msg_type is not msg_type:
                raise TypeError(
                    f"topic {name!r} carries {topic.msg_type.__name__}, not {msg_type.__name__}"
                )
            return topic

    def topic(self, name: str) -> Topic:
        try:
            return self._topics[name]
        except KeyError:
            raise KeyError(f"unknown topic {name!r}") from None

    def subscribe(self, name: str, inbox: queue.Queue, tag: str) -> None:
        topic = self.topic(name)
        with topic.lock:
            topic.subscribers.append((inbox, tag))

    def publish(self, name: str, msg: Any) -> None:
        topic = self.topic(name)
        if not isinstance(msg, (topic.msg_type, EndOfStream)):
            raise TypeError(f"topic {name!r} expects {topic.msg_type.__name__}, got {type(msg).__name__}")
        # the topic lock keeps every subscriber's view in one global publish order
        with topic.lock:
            for inbox, tag in topic.subscribers:
                inbox.put((tag, msg))


class Node:
    """Base for bus nodes; subclasses implement ``handle`` and optionally the EOS hooks."""

    name = "node"

    def __init__(self, bus: Bus, queue_size: int = DEFAULT_QUEUE_SIZE) -> None:
        self.bus = bus
        self.inbox: queue.Queue = queue.Queue(maxsize=queue_size)
        self._open: set[str] = set()
        self.done = False

    def subscribe(self, topic: str, tag: str | None = None) -> None:
        tag = tag or topic
        if tag in self._open:
            raise ValueError(f"duplicate subscription tag {tag!r}")
        self._open.add(tag)
        self.bus.subscribe(topic, self.inbox, tag)

    def handle(self, tag: str, msg: Any) -> None:
        raise NotImplementedError

    def on_eos(self, tag: str) -> None:
        pass

    def on_end(self) -> None:
        pass

    def process(self, tag: str, msg: Any) -> None:
        if isinstance(msg, EndOfStream):
            self._open.discard(tag)
            self.on_eos(tag)
            if not self._open:
                self.on_end()
                self.done = True
        else:
            self.handle(tag, msg)

    def step(self) -> bool:
        """Handle one queued message without blocking; False when the inbox is empty."""
        try:
            tag, msg = self.inbox.get_nowait()
        except queue.Empty:
            return False
        self.process(tag, msg)
        return True

    def run(self) -> None:
        while not self.done:
            tag, msg = self.inbox.get()
            self.process(tag, msg)
