"""Run a search node as a separate process for black-box tests."""

import json
import os
import signal
import subprocess
import sys


class NodeProcess:
    def __init__(self, config, agency, instrument_path=None, insecure=True):
        env = dict(os.environ)
        if instrument_path is not None:
            env["HEFED_INSTRUMENT"] = str(instrument_path)
        env.pop("HEFED_AUTHORITY_TOKEN", None)  # nodes never hold the credential
        cmd = [sys.executable, "-m", "hefed", "--config", str(config)]
        if insecure:
            cmd.append("--insecure-params")
        cmd += ["serve", "--agency", agency, "--listen", "127.0.0.1:0"]
        self.instrument_path = instrument_path
        self.proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, env=env)
        line = self.proc.stdout.readline()
        if not line.startswith("listening "):
            self.proc.kill()
            raise RuntimeError(f"node failed to start: {line!r} {self.proc.stderr.read()}")
        self.endpoint = line.split()[1]

    def stop(self):
        if self.proc.poll() is None:
            self.proc.send_signal(signal.SIGTERM)
            self.proc.wait(timeout=30)
        return self.proc.returncode

    def report(self):
        return json.loads(open(self.instrument_path).read())
