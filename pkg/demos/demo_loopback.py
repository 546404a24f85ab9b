"""Live loopback measurement session: server and client in one process.

Starts the rendering server on an ephemeral port, replays a sinusoidal head
motion trace, measures motion-to-photon latency with 15 marker trials, and
prints the client's report. Run it twice with EXTRA_MS = 50 to watch the mean
M2P shift by exactly the injected delay.
"""

import asyncio
import json

from vcstream.client import run_session
from vcstream.server import ServerConfig, SignalingServer
from vcstream.traces import generate_trace

EXTRA_MS = 0.0


async def main():
    config = ServerConfig(
        listen_port=0, width=320, height=240, fps=60, codec="delta",
        lookahead_us=25_000, extra_latency_ms=EXTRA_MS, log_level="quiet",
    )
    server = SignalingServer(config)
    await server.start()
    print(f"server on ws://127.0.0.1:{server.port} (extra latency {EXTRA_MS} ms)")
    try:
        trace = generate_trace("sinusoid", 4.0, 60.0, amplitude=0.4, freq_hz=0.8)
        report = await run_session(
            f"ws://127.0.0.1:{server.port}", trace, 3.0,
            m2p_trials=15, m2p_interval_ms=140,
        )
    finally:
        await server.close()

    print(json.dumps({k: v for k, v in report.items() if k != "m2p_records"}, indent=2))
    m2p = report["m2p_ms"]
    print(f"\nmotion-to-photon: mean {m2p['mean']:.1f} ms, p95 {m2p['p95']:.1f} ms "
          f"over {m2p['count']} trials ({report['m2p_unmatched']} unmatched)")


if __name__ == "__main__":
    asyncio.run(main())
