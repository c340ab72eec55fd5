"""Scenario runner: parse a config, execute a seeded campaign, check every
run, and emit human or machine reports with a stable digest.

Exit codes: 0 outcomes matched expectations, 2 config error, 3 unexpected
safety violation, 4 unexpected liveness failure, 5 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import adversary, checker, engine
from .core import Config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SAFETY = 3
EXIT_LIVENESS = 4
EXIT_INTERNAL = 5


class ConfigError(Exception):
    pass


_READER_STRATEGIES = {
    "correct": lambda spec: adversary.CorrectReader(),
    "silent": lambda spec: adversary.Silent(),
    "fake_witness_stamp": lambda spec: adversary.FakeWitnessStamp(
        offset=int(spec.get("offset", 10))
    ),
    "out_of_order_witness": lambda spec: adversary.OutOfOrderWitness(),
    "forge_inform_set": lambda spec: adversary.ForgeInformSet(),
    "equivocate": lambda spec: adversary.Equivocate.make(
        {int(k): v.encode() for k, v in spec.get("values", {}).items()}
    ),
    "collaborate_stabilize": lambda spec: adversary.CollaborateStabilize(),
}


def _writer_strategy(spec: dict):
    kind = spec.get("strategy", "correct")
    if kind == "correct":
        return adversary.CorrectWriter()
    if kind == "split_value":
        return adversary.SplitValue.make(
            {int(k): v.encode() for k, v in spec["assignment"].items()}
        )
    if kind == "partial_quorum":
        return adversary.PartialQuorum.make(
            *[set(map(int, s)) for s in spec["targets"]]
        )
    if kind == "multi_value_burst":
        return adversary.MultiValueBurst(tuple(v.encode() for v in spec["values"]))
    if kind == "overwrite_early":
        return adversary.OverwriteEarly(delay=int(spec.get("delay", 2)))
    if kind == "stale_counter":
        return adversary.StaleCounter(k=int(spec.get("k", 1)))
    raise ConfigError(f"unknown writer strategy {kind!r}")


@dataclass
class Scenario:
    name: str
    cfg: Config
    u0: bytes
    scheme: str
    strategies: adversary.StrategyAssignment
    workload: engine.Workload
    schedule_spec: dict
    seeds: list[int]
    step_limit: int
    settle_steps: int
    expected_status: str
    expected_violations: tuple[str, ...]
    byz_readers: frozenset[int]
    warnings: list[str] = field(default_factory=list)


def _schedule_for(spec: dict, seed: int) -> engine.Schedule:
    kind = spec.get("kind", "seeded")
    if kind == "seeded":
        return engine.SeededRandom(seed=seed, fair=bool(spec.get("fair", True)))
    if kind == "round_robin":
        return engine.RoundRobin()
    if kind == "scripted":
        return engine.Scripted(
            steps=tuple(spec["steps"]), then=spec.get("then", "round_robin")
        )
    raise ConfigError(f"unknown schedule kind {kind!r}")


def load_scenario(path: str | Path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc

    warnings: list[str] = []

    scripted = raw.get("scripted")
    if scripted is not None:
        factory = adversary.SCENARIO_SCRIPTS.get(scripted)
        if factory is None:
            raise ConfigError(f"unknown scripted scenario {scripted!r}")
        s = factory()
        seeds = [int(x) for x in raw.get("seeds", [0])]
        sched = raw.get("schedule")
        return Scenario(
            name=raw.get("name", s.name),
            cfg=s.cfg,
            u0=s.u0,
            scheme=raw.get("crypto", "keyed"),
            strategies=s.strategies,
            workload=s.workload,
            schedule_spec=sched if sched is not None else {"kind": "__scripted__", "obj": s.schedule},
            seeds=seeds,
            step_limit=int(raw.get("step_limit", s.step_limit)),
            settle_steps=int(raw.get("settle_steps", s.settle_steps)),
            expected_status=raw.get("expected", {}).get("status", s.expected_status),
            expected_violations=tuple(
                raw.get("expected", {}).get("violations", s.expected_violations)
            ),
            byz_readers=s.strategies.byzantine_readers(),
            warnings=warnings,
        )

    try:
        cfg_raw = raw["config"]
        cfg = Config(
            n=int(cfg_raw["n"]),
            t=int(cfg_raw["t"]),
            writer_byzantine=bool(cfg_raw.get("writer_byzantine", False)),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad config block: {exc}") from exc

    readers: dict[int, object] = {}
    for key, spec in raw.get("readers", {}).items():
        i = int(key)
        if not 1 <= i <= cfg.n:
            raise ConfigError(f"reader index {i} outside 1..{cfg.n}")
        kind = spec.get("strategy", "correct")
        builder = _READER_STRATEGIES.get(kind)
        if builder is None:
            raise ConfigError(f"unknown reader strategy {kind!r}")
        readers[i] = builder(spec)
    strategies = adversary.StrategyAssignment(
        writer=_writer_strategy(raw.get("writer", {})), readers=readers
    )

    byz = strategies.byzantine_readers()
    if len(byz) > cfg.t:
        if not raw.get("allow_sub_threshold", False):
            raise ConfigError(
                f"{len(byz)} Byzantine readers exceed t={cfg.t}; "
                "set allow_sub_threshold to proceed"
            )
        warnings.append(f"sub-threshold override: {len(byz)} Byzantine readers, t={cfg.t}")
    if cfg.n <= 3 * cfg.t:
        warnings.append(f"n={cfg.n} <= 3t={3 * cfg.t}: genuine advance not guaranteed")
    if cfg.n <= 2 * cfg.t:
        warnings.append(f"n={cfg.n} <= 2t={2 * cfg.t}: total order not guaranteed")

    wl_raw = raw.get("workload", {})
    workload = engine.Workload.make(
        writes=[w.encode() for w in wl_raw.get("writes", [])],
        reads={int(k): int(v) for k, v in wl_raw.get("reads", {}).items()},
        read_gap=int(wl_raw.get("read_gap", 0)),
    )
    for i in workload.reads:
        if i[0] in byz:
            warnings.append(f"reads assigned to Byzantine reader {i[0]} are dropped")

    seeds_raw = raw.get("seeds", [0])
    if isinstance(seeds_raw, dict):
        start = int(seeds_raw.get("start", 0))
        count = int(seeds_raw.get("count", 1))
        seeds = list(range(start, start + count))
    else:
        seeds = [int(x) for x in seeds_raw]

    expected = raw.get("expected", {})
    return Scenario(
        name=raw.get("name", Path(path).stem),
        cfg=cfg,
        u0=raw.get("u0", "init").encode(),
        scheme=raw.get("crypto", "keyed"),
        strategies=strategies,
        workload=workload,
        schedule_spec=raw.get("schedule", {"kind": "seeded"}),
        seeds=seeds,
        step_limit=int(raw.get("step_limit", 20000)),
        settle_steps=int(raw.get("settle_steps", 0)),
        expected_status=expected.get("status", "completed"),
        expected_violations=tuple(expected.get("violations", [])),
        byz_readers=byz,
        warnings=warnings,
    )


@dataclass
class SeedResult:
    seed: int
    status: str
    report: checker.CheckReport


@dataclass
class CampaignResult:
    scenario: Scenario
    results: list[SeedResult]

    def matches_expected(self) -> bool:
        s = self.scenario
        for r in self.results:
            if r.status != s.expected_status:
                return False
            actual = set(r.report.violations())
            expected = set(s.expected_violations)
            if expected:
                if not expected <= actual:
                    return False
                if actual - expected:
                    return False
            elif actual:
                return False
        return True

    def exit_code(self) -> int:
        if self.matches_expected():
            return EXIT_OK
        for r in self.results:
            if r.status == "step_limit" and self.scenario.expected_status != "step_limit":
                return EXIT_LIVENESS
        return EXIT_SAFETY


def run_scenario(scenario: Scenario) -> CampaignResult:
    results: list[SeedResult] = []
    for seed in scenario.seeds:
        spec = scenario.schedule_spec
        if spec.get("kind") == "__scripted__":
            schedule = spec["obj"]
        else:
            schedule = _schedule_for(spec, seed)
        history = engine.run(
            scenario.cfg,
            scenario.strategies,
            scenario.workload,
            schedule,
            scenario.step_limit,
            u0=scenario.u0,
            scheme=scenario.scheme,
            key_seed=seed,
            settle_steps=scenario.settle_steps,
            raise_on_limit=False,
        )
        report = checker.run_all_checks(history, scenario.byz_readers)
        results.append(SeedResult(seed=seed, status=history.status, report=report))
    return CampaignResult(scenario=scenario, results=results)


def emit_records(campaign: CampaignResult):
    s = campaign.scenario
    yield json.dumps(
        {
            "scenario": s.name,
            "n": s.cfg.n,
            "t": s.cfg.t,
            "writer_byzantine": s.cfg.writer_byzantine,
            "seeds": len(s.seeds),
            "expected_status": s.expected_status,
            "expected_violations": sorted(s.expected_violations),
            "registers": 3 * s.cfg.n**2 + 2 * s.cfg.n,
        },
        sort_keys=True,
    )
    for w in s.warnings:
        yield json.dumps({"warning": w}, sort_keys=True)
    for r in campaign.results:
        yield json.dumps({"seed": r.seed, "status": r.status}, sort_keys=True)
        yield from r.report.records()
    yield json.dumps({"matches_expected": campaign.matches_expected()}, sort_keys=True)


def campaign_digest(campaign: CampaignResult) -> str:
    h = hashlib.sha256()
    for line in emit_records(campaign):
        h.update(line.encode())
        h.update(b"\n")
    return h.hexdigest()


def emit_human(campaign: CampaignResult, out) -> None:
    s = campaign.scenario
    n = s.cfg.n
    print(f"scenario {s.name}: n={n}, t={s.cfg.t}, "
          f"writer {'Byzantine' if s.cfg.writer_byzantine else 'correct'}", file=out)
    print(f"  registers: 3n^2+2n = {3 * n * n + 2 * n}", file=out)
    print("  note: the witness/inform/final families hold 3n^2 registers; the "
          "init/ack families add 2n (a per-reader pair, not 2n^2).", file=out)
    for w in s.warnings:
        print(f"  warning: {w}", file=out)
    ok = 0
    for r in campaign.results:
        violations = r.report.violations()
        if r.status == s.expected_status and set(violations) == set(s.expected_violations):
            ok += 1
        else:
            print(f"  seed {r.seed}: status={r.status} violations={violations}", file=out)
            for name, v in r.report.verdicts.items():
                if v.status == "violation":
                    print(f"    {name}: {v.detail}", file=out)
    last = campaign.results[-1] if campaign.results else None
    if last is not None:
        chain = " -> ".join(str(v) for v in last.report.chain)
        order = " -> ".join(str(s_.value) for s_ in last.report.stabilizations)
        print(f"  last seed stabilization order: {order}", file=out)
        if chain:
            print(f"  last seed timestamp chain:   {chain}", file=out)
        invisible = last.report.invisible_stabilizations()
        if invisible:
            names = ", ".join(str(s_.value) for s_ in invisible)
            print(f"  stabilized but never returned (no check applies): {names}", file=out)
    print(f"  {ok}/{len(campaign.results)} seeds matched expectations", file=out)
    print(f"  digest: {campaign_digest(campaign)}", file=out)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="byzreg",
        description="Run a register-emulation scenario and check every property.",
    )
    parser.add_argument("scenario", help="path to a scenario JSON file")
    parser.add_argument("--seeds", type=int, default=None, help="override seed count")
    parser.add_argument("--step-limit", type=int, default=None)
    parser.add_argument(
        "--format", choices=("human", "records"), default="human", dest="fmt"
    )
    parser.add_argument(
        "--fail-fast", action="store_true", help="stop at the first mismatching seed"
    )
    args = parser.parse_args(argv)

    try:
        scenario = load_scenario(args.scenario)
        if args.seeds is not None:
            scenario.seeds = list(range(args.seeds))
        if args.step_limit is not None:
            scenario.step_limit = args.step_limit
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.fail_fast:
            results = []
            for seed in scenario.seeds:
                one = Scenario(**{**scenario.__dict__, "seeds": [seed]})
                partial = run_scenario(one)
                results.extend(partial.results)
                if not partial.matches_expected():
                    break
            campaign = CampaignResult(scenario=scenario, results=results)
        else:
            campaign = run_scenario(scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - checker failures are exit 5
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    if args.fmt == "records":
        for line in emit_records(campaign):
            print(line)
        print(json.dumps({"digest": campaign_digest(campaign)}, sort_keys=True))
    else:
        emit_human(campaign, sys.stdout)
    return campaign.exit_code()


if __name__ == "__main__":
    sys.exit(main())
