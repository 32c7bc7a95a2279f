"""Sandboxed execution of untrusted benchmark programs.

Each verdict comes from a fresh subprocess in its own process group: the
network namespace is unshared when the platform grants it and a socket shim
blocks the module API either way, credentials drop to nobody when running
as root, cwd and HOME point at a throwaway directory, and a wall-clock
timeout kills the whole group. The verdict is 1 only when the program and
every test snippet run to completion; everything else is 0. Failures of the
sandbox itself (not the program) raise SandboxInfraError instead.
"""

from __future__ import annotations

import ctypes
import json
import os
import resource
import signal
import subprocess
import sys
import tempfile

from ingest.raw import IngestInputError, RawSample

_CLONE_NEWNET = 0x40000000
_NOBODY = 65534
_EXIT_INFRA = 107
_FSIZE_LIMIT = 64 * 1024 * 1024

try:
    _LIBC = ctypes.CDLL(None, use_errno=True)
except OSError:  # non-POSIX platform; the shim still blocks sockets
    _LIBC = None


class SandboxInfraError(RuntimeError):
    """The sandbox could not run at all; distinct from a failing program."""


_RUNNER = '''\
import builtins
import json
import socket
import sys


def _no_network(*args, **kwargs):
    raise OSError("network access is disabled in the test sandbox")


socket.socket = _no_network
socket.create_connection = _no_network
socket.socketpair = _no_network
socket.fromfd = _no_network


def main() -> int:
    try:
        with open("sample.json", "r", encoding="utf-8") as fh:
            sample = json.load(fh)
        source = sample["source_text"]
        tests = sample["tests"]
    except Exception:
        return 107
    namespace = {"__name__": "__main__", "__builtins__": builtins}
    try:
        exec(compile(source, "<program>", "exec"), namespace)
        for index, snippet in enumerate(tests):
            exec(compile(snippet, "<test %d>" % index, "exec"), dict(namespace))
    except BaseException:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
'''


def _confine(cpu_seconds: int):
    """Pre-exec hook: resource limits, then namespace, then credentials.

    Every step is best-effort on its own so the sandbox degrades gracefully
    on platforms without root; the runner's socket shim still holds there.
    """

    def hook() -> None:
        for limit, value in (
            (resource.RLIMIT_CPU, cpu_seconds),
            (resource.RLIMIT_FSIZE, _FSIZE_LIMIT),
            (resource.RLIMIT_NPROC, 128),
        ):
            try:
                resource.setrlimit(limit, (value, value))
            except (ValueError, OSError):
                pass
        if _LIBC is not None:
            try:
                _LIBC.unshare(_CLONE_NEWNET)
            except Exception:
                pass
        if os.geteuid() == 0:
            try:
                os.setgid(_NOBODY)
                os.setgroups([])
                os.setuid(_NOBODY)
            except OSError:
                pass

    return hook


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass
    proc.wait()


def execute_tests(sample: RawSample, timeout_ms: int = 5000) -> int:
    """1 iff the program passes every test snippet inside the sandbox.

    Timeouts, crashes, failing asserts, and unparsable programs are all 0;
    only the sandbox failing to start or to read its own input raises.
    """
    if not sample.tests:
        raise IngestInputError(f"task {sample.task_id!r}: no tests to execute")
    if timeout_ms <= 0:
        raise IngestInputError(f"timeout_ms must be positive, got {timeout_ms}")

    with tempfile.TemporaryDirectory(prefix="ingest-sandbox-") as box:
        os.chmod(box, 0o777)
        payload = {"source_text": sample.source_text, "tests": list(sample.tests)}
        for name, text in (("sample.json", json.dumps(payload)), ("runner.py", _RUNNER)):
            path = os.path.join(box, name)
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.chmod(path, 0o644)

        env = {
            "PATH": "/usr/local/bin:/usr/bin:/bin",
            "HOME": box,
            "TMPDIR": box,
            "LC_ALL": "C.UTF-8",
            "LANG": "C.UTF-8",
            "PYTHONDONTWRITEBYTECODE": "1",
            "PYTHONHASHSEED": "0",
        }
        try:
            proc = subprocess.Popen(
                [sys.executable, "-I", "runner.py"],
                cwd=box,
                env=env,
                stdin=subprocess.DEVNULL,
                stdout=subprocess.DEVNULL,
                stderr=subprocess.DEVNULL,
                start_new_session=True,
                preexec_fn=_confine(max(2, timeout_ms // 1000 + 2)),
            )
        except (OSError, subprocess.SubprocessError) as exc:
            raise SandboxInfraError(f"could not start sandbox: {exc}") from exc
        try:
            code = proc.wait(timeout=timeout_ms / 1000.0)
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            return 0
        if code == _EXIT_INFRA:
            raise SandboxInfraError("sandbox runner could not read its input")
        return 1 if code == 0 else 0
