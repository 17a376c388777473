from __future__ import annotations

import contextlib
import fcntl
import os
from pathlib import Path
from typing import IO, Iterator

LOCK_NAME = ".thirdscatter.lock"


class OutputLock:
    """Advisory single-writer lock on an output directory.

    The holder writes `<pid> <pipeline>` into the lock file so a blocked run can say who it
    is waiting on.
    """

    def __init__(self, out_dir: Path, pipeline: str = "") -> None:
        self._path = out_dir / LOCK_NAME
        self._pipeline = pipeline
        self._fp: IO[str] | None = None

    @property
    def path(self) -> Path:
        return self._path

    def holder(self) -> str:
        try:
            return self._path.read_text(encoding="utf-8").strip()
        except FileNotFoundError:
            return ""

    def try_acquire(self) -> bool:
        if self._fp is not None:
            return True
        self._path.parent.mkdir(parents=True, exist_ok=True)
        fp = self._path.open("a+", encoding="utf-8")
        try:
            fcntl.flock(fp.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            fp.close()
            return False

        fp.seek(0)
        fp.truncate()
        fp.write(f"{os.getpid()} {self._pipeline}".rstrip() + "\n")
        fp.flush()
        self._fp = fp
        return True

    def release(self) -> None:
        fp, self._fp = self._fp, None
        if fp is None:
            return
        try:
            fp.truncate(0)
            fcntl.flock(fp.fileno(), fcntl.LOCK_UN)
        finally:
            fp.close()

    @contextlib.contextmanager
    def acquired(self) -> Iterator[bool]:
        ok = self.try_acquire()
        try:
            yield ok
        finally:
            if ok:
                self.release()
