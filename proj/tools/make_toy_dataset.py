#!/usr/bin/env python3
"""Writes the bundled toy event log (synthetic, schema-compatible with manifests/toy.json)."""
import argparse
import json
import random

PROGRAMS = ["/usr/bin/bash", "/usr/sbin/sshd", "/usr/sbin/cron", "/usr/bin/python3", "/usr/bin/curl",
            "/usr/bin/vim", "/usr/sbin/nginx", "/usr/bin/tar", "/usr/bin/git", "/usr/bin/make"]
FILES = ["/etc/passwd", "/etc/shadow", "/etc/hosts", "/etc/ssh/sshd_config", "/etc/crontab",
         "/var/log/syslog", "/var/log/auth.log", "/var/log/nginx/access.log", "/tmp/build.o", "/tmp/out.tar",
         "/home/alice/notes.txt", "/home/alice/.bashrc", "/home/bob/report.pdf", "/home/bob/.ssh/id_rsa",
         "/usr/lib/libc.so.6", "/usr/lib/libssl.so.3", "/var/www/index.html", "/srv/repo/main.c"]
HOSTS = ["10.0.0.5:443", "10.0.0.7:22", "192.168.1.20:80", "172.16.4.2:53", "93.184.216.34:443",
         "10.0.3.9:8080"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--events", type=int, default=300)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="data/toy/events.jsonl")
    args = ap.parse_args()
    rng = random.Random(args.seed)

    procs = ["/sbin/init"]
    events = []

    def emit(st, sn, et, dt, dn):
        events.append({"src_type": st, "src_name": sn, "edge_type": et, "dst_type": dt, "dst_name": dn})

    while len(events) < args.events:
        p = rng.choice(procs)
        r = rng.random()
        if r < 0.15 and len(procs) < 40:
            child = rng.choice(PROGRAMS)
            emit("process", p, "clone", "process", child)
            emit("process", child, "execve", "process", child)
            procs.append(child)
        elif r < 0.45:
            emit("process", p, "read", "file", rng.choice(FILES))
        elif r < 0.7:
            emit("process", p, "write", "file", rng.choice(FILES))
        elif r < 0.85:
            emit("process", p, "connect", "network", rng.choice(HOSTS))
        else:
            emit("process", p, "send", "network", rng.choice(HOSTS))

    with open(args.out, "w") as f:
        for e in events[: args.events]:
            f.write(json.dumps(e, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
