from __future__ import annotations

import sqlite3
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional


@dataclass(frozen=True)
class RunRecord:
    run_id: int
    pipeline: str
    config_hash: str
    version: str
    status: str
    message: str
    started_at: float
    finished_at: float | None
    elapsed_seconds: float | None
    report_path: str


class RunStore:
    """Run ledger kept next to the outputs; timing lives here, not in the report files."""

    def __init__(self, db_path: Path) -> None:
        self._db_path = db_path
        self._db_path.parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(str(self._db_path))
        self._conn.execute("PRAGMA journal_mode=WAL;")
        self._init_schema()

    def close(self) -> None:
        self._conn.close()

    def _init_schema(self) -> None:
        self._conn.execute(
            """
            CREATE TABLE IF NOT EXISTS runs (
              id INTEGER PRIMARY KEY AUTOINCREMENT,
              pipeline TEXT NOT NULL,
              config_hash TEXT NOT NULL,
              version TEXT NOT NULL,
              status TEXT NOT NULL DEFAULT 'running',
              message TEXT NOT NULL DEFAULT '',
              started_at REAL NOT NULL,
              finished_at REAL,
              elapsed_seconds REAL,
              report_path TEXT NOT NULL DEFAULT ''
            )
            """
        )
        self._conn.commit()

    def start_run(self, *, pipeline: str, config_hash: str, version: str) -> int:
        cur = self._conn.execute(
            "INSERT INTO runs (pipeline, config_hash, version, started_at) VALUES (?, ?, ?, ?)",
            (pipeline, config_hash, version, time.time()),
        )
        self._conn.commit()
        return int(cur.lastrowid)

    def finish_run(self, run_id: int, *, status: str, message: str = "", report_path: str = "") -> None:
        now = time.time()
        self._conn.execute(
            """
            UPDATE runs
            SET status = ?, message = ?, finished_at = ?, elapsed_seconds = ? - started_at, report_path = ?
            WHERE id = ?
            """,
            (status, message, now, now, report_path, int(run_id)),
        )
        self._conn.commit()

    def get(self, run_id: int) -> Optional[RunRecord]:
        row = self._conn.execute(
            """
            SELECT id, pipeline, config_hash, version, status, message, started_at, finished_at,
                   elapsed_seconds, report_path
            FROM runs WHERE id = ?
            """,
            (int(run_id),),
        ).fetchone()
        if row is None:
            return None
        return RunRecord(*row)

    def recent(self, limit: int = 20) -> list[RunRecord]:
        rows = self._conn.execute(
            """
            SELECT id, pipeline, config_hash, version, status, message, started_at, finished_at,
                   elapsed_seconds, report_path
            FROM runs ORDER BY id DESC LIMIT ?
            """,
            (int(limit),),
        ).fetchall()
        return [RunRecord(*row) for row in rows]
