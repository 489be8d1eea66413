"""Run a built-in policy as a step-protocol subprocess.

Usage: python3 -m gridflow.policy_host <name>

Reads init and obs messages from stdin, writes ready and act messages to
stdout, exits cleanly on EOF. This is how the built-ins are exercised over
the same wire external policies use.
"""

from __future__ import annotations

import json
import sys

from .errors import ProtocolViolation
from .policies import make_builtin
from .protocol import read_message, write_message


def serve(name: str, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    policy = make_builtin(name)
    init = read_message(stdin)
    if init.get("type") != "init":
        raise ProtocolViolation(f"expected init, got {init.get('type')!r}")
    write_message(stdout, policy.on_init(init))
    while True:
        line = stdin.readline()
        if not line:
            break
        obs = json.loads(line)
        if obs.get("type") != "obs":
            break
        write_message(stdout, policy.on_obs(obs))
    policy.close()


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python3 -m gridflow.policy_host <builtin-name>", file=sys.stderr)
        return 2
    try:
        serve(argv[0])
    except ValueError as e:
        print(str(e), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
