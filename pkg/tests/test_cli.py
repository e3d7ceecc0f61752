"""Tests for the run configuration, history files and the CLI."""

import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stdout

from tunable_sqp.cli import compare, main, run
from tunable_sqp.config import RunConfig
from tunable_sqp.errors import ConfigError, ParseError
from tunable_sqp.history import History, compare_report, read_history
from tunable_sqp.problems import make_problem


def summary_fields(path):
    fields = {}
    with open(path) as f:
        for line in f:
            key, _, value = line.partition(': ')
            fields[key] = value.strip()
    return fields


class CliTestCase(unittest.TestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmpdir = tmp.name

    def path(self, name):
        return os.path.join(self.tmpdir, name)

    def write_config(self, name='run.json', **values):
        values.setdefault('history', self.path('history.csv'))
        values.setdefault('summary', self.path('summary.txt'))
        with open(self.path(name), 'w') as f:
            json.dump(values, f)
        return self.path(name)


class TestRun(CliTestCase):
    def test_exact_p1(self):
        config = self.write_config(problem='P1', solver='exact')
        err = io.StringIO()
        self.assertEqual(run(config, err), 0)
        summary = summary_fields(self.path('summary.txt'))
        self.assertEqual(summary['status'], 'Converged')
        self.assertLessEqual(float(summary['final_feasibility']), 1e-8)
        history = read_history(self.path('history.csv'))
        self.assertEqual(history.parameters['problem'], 'P1')
        self.assertEqual(history.iterations, int(summary['iterations']))

    def test_runs_are_reproducible(self):
        outputs = []
        for name in ('a', 'b'):
            config = self.write_config(
                f'{name}.json',
                problem='P3',
                solver='inexact',
                provider='synthetic',
                hessian_strategy='gauss-newton',
                instrumented=True,
                seed=0,
                history=self.path(f'{name}.csv'),
                summary=self.path(f'{name}.txt'),
            )
            self.assertEqual(run(config, io.StringIO()), 0)
            with open(self.path(f'{name}.csv'), 'rb') as f:
                outputs.append(f.read())
        self.assertEqual(outputs[0], outputs[1])
        history = read_history(self.path('a.csv'))
        self.assertEqual(history.parameters['seed'], '0')
        self.assertTrue(
            history.parameters['provider_options'].startswith('decay:'),
        )

    def test_malformed_config(self):
        config = self.path('bad.json')
        with open(config, 'w') as f:
            f.write('{"problem": "P1",\n  "solver": }\n')
        err = io.StringIO()
        self.assertEqual(run(config, err), 2)
        self.assertIn(f'{config}:2:', err.getvalue())
        self.assertEqual(os.listdir(self.tmpdir), ['bad.json'])

    def test_unknown_key(self):
        config = self.write_config(problem='P1', solvr='exact')
        err = io.StringIO()
        self.assertEqual(run(config, err), 2)
        self.assertIn('solvr', err.getvalue())
        self.assertEqual(os.listdir(self.tmpdir), ['run.json'])

    def test_solver_failure_exit_code(self):
        config = self.write_config(problem='P2', max_iter=0)
        err = io.StringIO()
        self.assertEqual(run(config, err), 3)
        self.assertIn('MaxIter', err.getvalue())
        summary = summary_fields(self.path('summary.txt'))
        self.assertEqual(summary['status'], 'MaxIter')

    def test_effective_config_reproduces_run(self):
        config = self.write_config(
            problem='P2',
            solver='inexact',
            provider='synthetic',
            provider_options={'decay': 0.1},
            hessian_strategy='gauss-newton',
            effective_config=self.path('effective.json'),
        )
        self.assertEqual(run(config, io.StringIO()), 0)
        with open(self.path('history.csv'), 'rb') as f:
            first = f.read()
        self.assertEqual(
            RunConfig.load(self.path('effective.json')),
            RunConfig.load(config),
        )
        self.assertEqual(run(self.path('effective.json'), io.StringIO()), 0)
        with open(self.path('history.csv'), 'rb') as f:
            self.assertEqual(f.read(), first)

    def test_burgers_defaults(self):
        paths = {}
        for solver, provider in (('exact', 'exact-wrapper'),
                                 ('inexact', 'rom')):
            config = self.write_config(
                f'{solver}.json',
                problem='burgers',
                solver=solver,
                provider=provider,
                history=self.path(f'{solver}.csv'),
                summary=self.path(f'{solver}.txt'),
            )
            self.assertEqual(run(config, io.StringIO()), 0, solver)
            summary = summary_fields(self.path(f'{solver}.txt'))
            self.assertEqual(summary['status'], 'Converged', solver)
            history = read_history(self.path(f'{solver}.csv'))
            self.assertEqual(
                history.parameters['hessian_strategy'], 'gauss-newton',
            )
            for row in history.rows:
                self.assertEqual(row['rho'], 1.0, (solver, row['k']))
            paths[solver] = self.path(f'{solver}.csv')
        out = io.StringIO()
        self.assertEqual(
            compare(paths['exact'], paths['inexact'], out, io.StringIO()),
            0,
        )
        self.assertIn('fewer FOM evaluations: B', out.getvalue())

    def test_unwritable_output(self):
        missing = os.path.join(self.tmpdir, 'missing', 'history.csv')
        config = self.write_config(problem='P1', history=missing)
        err = io.StringIO()
        self.assertEqual(run(config, err), 1)
        self.assertIn(missing, err.getvalue())


class TestRunConfig(unittest.TestCase):
    def test_round_trip(self):
        config = RunConfig(
            problem='burgers',
            problem_options={'grid_size': 50, 'viscosity': 0.05},
            solver='inexact',
            provider='rom',
            provider_options={'max_basis': 12},
            hessian_strategy='gauss-newton',
            tol_f=1e-8,
        )
        self.assertEqual(RunConfig.from_dict(config.to_dict()), config)

    def test_synthetic_decay_default(self):
        config = RunConfig(problem='P1', provider='synthetic')
        self.assertEqual(config.provider_options, {'decay': 0.1})

    def test_integers_are_floats(self):
        config = RunConfig.from_dict({'tol_f': 1, 'rho0': 2})
        self.assertIsInstance(config.tol_f, float)
        self.assertEqual(config.rho0, 2.0)

    def test_rejects_invalid(self):
        bad = (
            {'problem': 'P9'},
            {'solver': 'newton'},
            {'provider': 'rom'},
            {'hessian_strategy': 'sr1'},
            {'max_iter': 1.5},
            {'instrumented': 1},
            {'tol_f': -1.0},
            {'omega': 1.5},
            {'problem_options': {'grid_size': 10}},
            {'provider': 'synthetic', 'provider_options': {'order': 2}},
        )
        for data in bad:
            with self.assertRaises(ConfigError, msg=str(data)):
                RunConfig.from_dict(data)

    def test_invalid_provider_options(self):
        config = RunConfig.from_dict(
            {'provider': 'synthetic', 'provider_options': {'decay': 2.0}},
        )
        with self.assertRaises(ConfigError):
            config.build_provider(make_problem('P1'))

    def test_invalid_problem_options(self):
        config = RunConfig(
            problem='burgers', problem_options={'grid_size': 2},
        )
        with self.assertRaises(ConfigError):
            config.build_problem()

    def test_not_an_object(self):
        with self.assertRaises(ConfigError):
            RunConfig.from_dict(['P1'])


class TestCompare(CliTestCase):
    def history_file(self, name, **values):
        config = self.write_config(
            f'{name}.json',
            history=self.path(f'{name}.csv'),
            summary=self.path(f'{name}.txt'),
            **values,
        )
        run(config, io.StringIO())
        return self.path(f'{name}.csv')

    def test_identical_runs(self):
        path = self.history_file('a', problem='P2')
        out = io.StringIO()
        self.assertEqual(compare(path, path, out, io.StringIO()), 0)
        report = out.getvalue()
        self.assertIn('fewer FOM evaluations: tie', report)
        for line in report.splitlines()[1:6]:
            self.assertEqual(line.split()[-1], '0', line)

    def test_truncated_file(self):
        path = self.history_file('a', problem='P2')
        with open(path) as f:
            lines = f.read().splitlines()
        lines[-1] = lines[-1].rsplit(',', 3)[0]
        with open(path, 'w') as f:
            f.write('\n'.join(lines) + '\n')
        err = io.StringIO()
        self.assertEqual(compare(path, path, io.StringIO(), err), 1)
        self.assertIn(f'{path}:{len(lines)}:', err.getvalue())
        with self.assertRaises(ParseError):
            read_history(path)

    def test_not_a_history_file(self):
        path = self.path('notes.txt')
        with open(path, 'w') as f:
            f.write('k,merit\n')
        with self.assertRaises(ParseError) as ctx:
            read_history(path)
        self.assertIn(f'{path}:1:', str(ctx.exception))

    def test_flags_fewer_full_order_solves(self):
        def history(path, fom_solves):
            row = {
                'k': 4, 'model_stationarity': 1e-7,
                'model_feasibility': 1e-9, 'true_stationarity': 2e-7,
                'merit': 1.0, 'rho': 1.0, 'alpha': 1.0,
                'fom_solves': fom_solves, 'rom_solves': 12,
                'basis_size': 9,
            }
            return History(path, rows=[row])

        report = compare_report(history('exact', 90), history('rom', 40))
        self.assertIn('fewer FOM evaluations: B', report)
        self.assertIn('-50', report)
        report = compare_report(history('rom', 40), history('exact', 90))
        self.assertIn('fewer FOM evaluations: A', report)

    def test_main_exit_code(self):
        path = self.history_file('a', problem='P1')
        out = io.StringIO()
        with redirect_stdout(out), self.assertRaises(SystemExit) as ctx:
            main(['compare', path, path])
        self.assertEqual(ctx.exception.code, 0)
        self.assertIn('iterations', out.getvalue())


if __name__ == '__main__':
    unittest.main()
