"""Command line front end.

Several operations can be queued in one invocation and run in order::

    cift --case ./case cloud --email E --password P app-android ./com.amazon.dee.app export --format l2t_csv --out tl.csv

Exit status: 0 when nothing fatal happened, 1 on a fatal module error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Sequence

from . import __version__
from . import catalog as _catalog
from .acquire import DEFAULT_PAGE_SIZE, DEFAULT_USER_AGENT, acquire_all, create_session, session_from_cookie_file
from .errors import CiftError
from .export import export_jsonl, export_l2t_csv
from .ingest import ingest_android, ingest_chrome, ingest_ios
from .store import DEFAULT_CASE_DIR, CaseDatabase, Operation, init_case, verify_evidence
from .webview import ALL_PROFILES, CHROMIUM_SIMPLE, DEFAULT_PROFILES

log = logging.getLogger("cift")

SUBCOMMANDS = ("cloud", "app-android", "app-ios", "browser-chrome", "export", "verify")
_VALUE_OPTIONS = {"--case", "--base-url", "--email", "--password", "--cookie-file", "--skills-base-url",
                  "--user-agent", "--page-size", "--format", "--out", "--webview-profile"}
_PROFILES = {"paper_simple": DEFAULT_PROFILES, "chromium_simple": (CHROMIUM_SIMPLE,), "all": ALL_PROFILES}


@dataclass
class OperationInput:
    """One queued input: an acquisition operation and its arguments."""
    operation: Operation
    args: tuple[str, ...] = ()
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.operation is Operation.CLOUD:
            if not (len(self.args) == 2 or self.options.get("cookie_file")):
                raise ValueError("cloud input needs email and password, or a cookie file")
        elif len(self.args) != 1 or not os.path.isdir(self.args[0]):
            raise ValueError(f"{self.operation.value} input needs exactly one existing directory")

    def __repr__(self) -> str:
        shown = self.args[:1] + ("***",) * (len(self.args) - 1) if self.operation is Operation.CLOUD else self.args
        return f"OperationInput({self.operation.value}, {shown!r})"


def run_input(case: CaseDatabase, item: OperationInput) -> str:
    """Run one queued input against ``case`` and return its summary text."""
    opts = item.options
    if item.operation is Operation.CLOUD:
        base_url = opts.get("base_url") or _catalog.DEFAULT_BASE_URL
        common = dict(skills_base_url=opts.get("skills_base_url"), user_agent=opts.get("user_agent") or DEFAULT_USER_AGENT)
        if item.args:
            session = create_session(base_url, item.args[0], item.args[1], **common)
        else:
            session = session_from_cookie_file(base_url, opts["cookie_file"], **common)
        report = acquire_all(session, case, page_size=opts.get("page_size") or DEFAULT_PAGE_SIZE,
                             download_audio=not opts.get("no_audio"))
        for w in report.warnings:
            print(f"warning: {w}", file=sys.stderr)
        return report.format()
    if item.operation is Operation.COMPANION_APP_ANDROID:
        report = ingest_android(case, item.args[0], profiles=_PROFILES[opts.get("webview_profile") or "paper_simple"])
    elif item.operation is Operation.COMPANION_APP_IOS:
        report = ingest_ios(case, item.args[0])
    else:
        report = ingest_chrome(case, item.args[0])
    for f in report.failures:
        print(f"diagnostic: {f}", file=sys.stderr)
    return report.format()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _global_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cift", description="Acquire and normalize Alexa cloud and companion-client artifacts.",
                usage="cift [--case DIR] [-v] COMMAND [ARGS] [COMMAND [ARGS] ...]",
                epilog="commands: " + ", ".join(SUBCOMMANDS))
    p.add_argument("--case", default=DEFAULT_CASE_DIR, help="case directory (default: %(default)s)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--version", action="version", version=f"cift {__version__}")
    return p


def _command_parser(name: str) -> argparse.ArgumentParser:
    p = _Parser(prog=f"cift {name}")
    if name == "cloud":
        p.add_argument("--base-url", default=_catalog.DEFAULT_BASE_URL)
        p.add_argument("--email")
        p.add_argument("--password")
        p.add_argument("--cookie-file")
        p.add_argument("--skills-base-url")
        p.add_argument("--user-agent")
        p.add_argument("--page-size", type=int, default=DEFAULT_PAGE_SIZE)
        p.add_argument("--no-audio", action="store_true", help="skip utterance audio downloads")
    elif name in ("app-android", "app-ios", "browser-chrome"):
        p.add_argument("dir")
        if name == "app-android":
            p.add_argument("--webview-profile", choices=sorted(_PROFILES), default="paper_simple")
    elif name == "export":
        p.add_argument("--format", required=True, choices=("l2t_csv", "jsonl"))
        p.add_argument("--out", required=True)
    return p


def _segments(tokens: Sequence[str]) -> list[list[str]]:
    """Split argv at subcommand names that are not option values."""
    segments: list[list[str]] = []
    expect_value = False
    for tok in tokens:
        if not expect_value and tok in SUBCOMMANDS:
            segments.append([tok])
        elif not segments:
            segments.append([tok])  # global options
        else:
            segments[-1].append(tok)
        expect_value = not expect_value and tok in _VALUE_OPTIONS
    return segments


def _parse(argv: Sequence[str]):
    segs = _segments(argv)
    globals_ = [] if not segs or segs[0][0] in SUBCOMMANDS else segs.pop(0)
    if segs and segs[0][0] not in SUBCOMMANDS:
        raise _UsageError(f"cift: error: unknown command {segs[0][0]!r}")
    gp = _global_parser()
    gargs = gp.parse_args(globals_)
    if not segs:
        gp.print_usage(sys.stderr)
        raise _UsageError("cift: error: no command given")
    commands = [(seg[0], _command_parser(seg[0]).parse_args(seg[1:])) for seg in segs]
    return gargs, commands


def _to_input(name: str, ns: argparse.Namespace) -> OperationInput:
    if name == "cloud":
        email = ns.email or os.environ.get("CIFT_EMAIL")
        password = ns.password or os.environ.get("CIFT_PASSWORD")
        opts = dict(base_url=ns.base_url, cookie_file=ns.cookie_file, skills_base_url=ns.skills_base_url,
                    user_agent=ns.user_agent, page_size=ns.page_size, no_audio=ns.no_audio)
        if email and password:
            return OperationInput(Operation.CLOUD, (email, password), opts)
        if ns.cookie_file:
            return OperationInput(Operation.CLOUD, (), opts)
        raise _UsageError("cift cloud: error: give --email and --password (or CIFT_EMAIL/CIFT_PASSWORD), "
                          "or --cookie-file")
    op = {"app-android": Operation.COMPANION_APP_ANDROID, "app-ios": Operation.COMPANION_APP_IOS,
          "browser-chrome": Operation.COMPANION_BROWSER_CHROME}[name]
    try:
        return OperationInput(op, (ns.dir,), {"webview_profile": getattr(ns, "webview_profile", None)})
    except ValueError as exc:
        raise _UsageError(f"cift {name}: error: {exc}") from exc


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        gargs, commands = _parse(argv)
        queued = [(name, _to_input(name, ns) if name not in ("export", "verify") else ns) for name, ns in commands]
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    logging.basicConfig(level=logging.WARNING - 10 * min(gargs.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        case = init_case(gargs.case)
    except CiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    status = 0
    with case:
        for name, item in queued:
            try:
                if name == "export":
                    fn = export_l2t_csv if item.format == "l2t_csv" else export_jsonl
                    n = fn(case, item.out)
                    print(f"export {item.format}: {n} rows -> {item.out}")
                elif name == "verify":
                    problems = verify_evidence(case)
                    for v in problems:
                        print(f"integrity: artifact {v.artifact_id} {v.kind}: {v.saved_path}", file=sys.stderr)
                    print(f"verify: {len(case.artifacts())} artifacts, {len(problems)} violations")
                    if problems:
                        status = 1
                else:
                    print(run_input(case, item))
            except (CiftError, OSError) as exc:
                print(f"error: {name}: {exc}", file=sys.stderr)
                status = 1
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
