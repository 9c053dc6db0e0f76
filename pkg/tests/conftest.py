import pytest

from tilesec.engine import InteractiveApp, Phase, Process
from tilesec.machine import Tag, default_config


@pytest.fixture(scope="session")
def cfg():
    return default_config()


def small_app(total=6, ws_secure=96, ws_insecure=128, samples=6, spec_rate=0.0, fault_rate=0.0,
              reuse=0.9, threads=64):
    """A short two-process app, cheap enough for traced runs inside unit tests."""
    ins = Process(1, Tag.INSECURE, [Phase(200_000, ws_pages=ws_insecure, samples=samples, reuse=reuse,
                                          interactions=total, barriers=total + 1)],
                  thread_count=threads, sync_coeff=5.0, spec_rate=spec_rate, fault_rate=fault_rate)
    sec = Process(2, Tag.SECURE, [Phase(150_000, ws_pages=ws_secure, samples=samples, reuse=reuse,
                                        interactions=total, barriers=total + 1)],
                  thread_count=threads, sync_coeff=5.0, token="tok")
    return InteractiveApp(1, [ins, sec], 400.0, total, signature="tok", name="small")
