import filecmp
import json
import os
import tempfile
import unittest

import numpy as np
from numpy import testing as npt

from sdebound import cli
from sdebound.config import ExperimentConfig, SchemeSpec, VerifyConfig, load_config
from sdebound.errors import ConfigError, PlanError
from sdebound.harness import (
    build_instance, measure_error, error_curve, export_bound_curve, export_samples, verify_all, resolve_N_list,
    check_self_consistency, check_sine_moment, check_bridge_identity, check_variance_floor, check_psi,
    check_bound_curve, check_parts, check_isometry, check_bridge_laws, check_oracle, check_schemes, check_dominance,
    CURVE_COLUMNS,
)
from sdebound.psi import PsiSpec
from sdebound.schemes import FixedSites, equispaced_sites, in_class

SMALL = dict(
    num_paths=4, fine_grid_exp=10, tail_grid_exp=8, prefix_length=40, N_list=[17],
    schemes=[dict(scheme='euler'), dict(scheme='gap_refiner'), dict(scheme='cond_mean', inner_mc=4)],
)

SMALL_VERIFY = dict(
    samples=2000, parts_paths=2, parts_grid_exp=12, isometry_grid_exp=10, oracle_paths=10, oracle_exps=[8, 10],
    scheme_paths=200, chunk=1000, dominance_paths=4,
)


def small_config(**kwargs):
    return ExperimentConfig.from_dict(dict(SMALL, **kwargs))


def read_lines(path):
    with open(path) as f:
        return f.read().splitlines()


class TestConfig(unittest.TestCase):

    def test_defaults(self):
        config = ExperimentConfig()
        self.assertEqual(config.master_seed, 20240917)
        self.assertEqual(config.tail_stride, 16)
        self.assertEqual([s.label for s in config.schemes], ['euler', 'gap_refiner', 'cond_mean'])
        self.assertEqual(SchemeSpec('cond_mean', statistic='median').label, 'cond_median')
        config = ExperimentConfig.from_dict(dict(schemes=[dict(scheme='cond_mean', head_points=65)]))
        self.assertEqual(config.schemes[0].head_points, 65)

    def test_validation(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig(tail_grid_exp=12, fine_grid_exp=10)
        with self.assertRaises(ConfigError):
            ExperimentConfig(tau1=0.6)
        with self.assertRaises(ConfigError):
            ExperimentConfig(workers=0)
        with self.assertRaises(ConfigError):
            ExperimentConfig(psi_kind='cubic')
        with self.assertRaises(ConfigError):
            ExperimentConfig(N_list=[0, 3])
        with self.assertRaises(ConfigError):
            SchemeSpec('milstein')
        with self.assertRaises(ConfigError):
            SchemeSpec('gap_refiner', budget=1)
        with self.assertRaises(ConfigError):
            SchemeSpec('cond_mean', head_points=1)
        with self.assertRaises(ConfigError):
            VerifyConfig(samples=0)
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_dict(dict(num_path=10))
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_dict(dict(verify=dict(sample=10)))

    def test_dict_and_override(self):
        config = small_config(verify=SMALL_VERIFY)
        back = ExperimentConfig.from_dict(json.loads(config.to_json()))
        self.assertEqual(back, config)
        self.assertEqual(back.N_list, (17,))
        self.assertEqual(back.verify.oracle_exps, (8, 10))

        self.assertIs(config.override(master_seed=None), config)
        self.assertEqual(config.override(master_seed=3, workers=None).master_seed, 3)

    def test_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'experiment.json')
            with open(path, 'w') as f:
                json.dump(SMALL, f)
            config = load_config(path, workers=2, output_dir=None)
            self.assertEqual(config.workers, 2)
            self.assertEqual(config.prefix_length, 40)

            with open(path, 'w') as f:
                f.write('{not json')
            with self.assertRaises(ConfigError):
                load_config(path)

        with self.assertRaises(ConfigError):
            load_config(os.path.join(tmp, 'missing.json'))

        self.assertEqual(load_config(), ExperimentConfig())


class TestInstance(unittest.TestCase):

    def test_instance(self):
        inst = build_instance(small_config())
        self.assertEqual(inst.N0, 17)
        self.assertIsInstance(inst.psi, PsiSpec)
        self.assertEqual(inst.bound_consts, inst.consts)
        npt.assert_allclose(inst.consts.alpha, (64 * np.exp(-8.0)) ** 2, rtol=1e-8)
        npt.assert_allclose(inst.consts.c1, 1.1546, atol=1e-3)
        npt.assert_allclose(inst.consts.c2, 13.497, atol=1e-2)

        self.assertIs(build_instance(small_config()), inst)
        self.assertEqual(resolve_N_list(small_config(N_list='auto'), inst), list(range(17, 26)))

        perturbed = build_instance(small_config(perturb_beta=2.0))
        self.assertEqual(perturbed.bound_consts.beta, 2 * perturbed.consts.beta)

    def test_unreachable_plan(self):
        with self.assertRaises(PlanError):
            build_instance(small_config(prefix_length=10))

        inst = build_instance(small_config(prefix_length=10, psi_kind='constant'))
        self.assertIsNone(inst.N0)


class TestMeasureError(unittest.TestCase):

    def test_exact_oracle(self):
        est = measure_error('exact', small_config(), N=17)
        self.assertEqual(est.mean_abs_error, 0.0)
        self.assertEqual(est.std_error, 0.0)
        self.assertEqual(est.measured_cost, 1.0)
        self.assertEqual(est.num_paths, 4)

        with self.assertRaises(ValueError):
            measure_error('oracle', small_config(), N=17)

    def test_deterministic(self):
        config = small_config()
        spec = SchemeSpec('gap_refiner')
        a = measure_error(spec, config, N=17)
        b = measure_error(spec, config, N=17)
        self.assertEqual(a.measured_cost, 17.0)
        self.assertGreater(a.mean_abs_error, 0.0)
        npt.assert_array_equal(a.runs.values(), b.runs.values())
        npt.assert_array_equal(a.runs.path_index, np.arange(4))

    def test_workers(self):
        spec = SchemeSpec('cond_mean', inner_mc=4)
        serial = measure_error(spec, small_config(), N=17)
        parallel = measure_error(spec, small_config(workers=2), N=17)
        npt.assert_array_equal(serial.runs.values(), parallel.runs.values())
        self.assertEqual(serial.mean_abs_error, parallel.mean_abs_error)

    def test_scheme_object(self):
        config = small_config(workers=2)
        inst = build_instance(config)
        est = measure_error(FixedSites([0.005, 0.01], inst.cs, inst.psi), config, N=17)
        self.assertEqual(est.measured_cost, 2.0)
        self.assertEqual(len(est.coord_errors), 4)
        ## X1 is exact for every scheme
        self.assertEqual(est.coord_errors[0], 0.0)

    def test_conditional_mean_vs_euler(self):
        ## equal cost N = 17 on the same master paths
        config = small_config(num_paths=200)
        inst = build_instance(config)
        delta = inst.plan.delta_N(17)
        cm = measure_error(SchemeSpec('cond_mean', inner_mc=16), config, N=17)
        med = measure_error(SchemeSpec('cond_mean', inner_mc=16, statistic='median'), config, N=17)
        same_info = measure_error(FixedSites(equispaced_sites(17, delta), inst.cs, inst.psi), config, N=17)
        euler = measure_error(SchemeSpec('euler'), config, N=17)

        self.assertEqual(cm.measured_cost, 17.0)
        self.assertEqual(med.measured_cost, 17.0)
        self.assertEqual(same_info.measured_cost, 17.0)
        self.assertLessEqual(euler.measured_cost, 17.0)

        for est in (cm, med):
            for other in (same_info, euler):
                self.assertLessEqual(est.mean_abs_error, other.mean_abs_error + 2 * other.std_error)


class TestErrorCurve(unittest.TestCase):

    def test_curve(self):
        config = small_config()
        inst = build_instance(config)
        with tempfile.TemporaryDirectory() as tmp:
            table = error_curve(config, out_dir=tmp, write_runs=True)
            curve = read_lines(os.path.join(tmp, 'error_curve.csv'))
            breakdown = read_lines(os.path.join(tmp, 'error_breakdown.csv'))
            for name in ('error_curve.npy', 'schema.json', 'config.json', 'runs_euler_N17.csv'):
                self.assertTrue(os.path.exists(os.path.join(tmp, name)), name)
            with open(os.path.join(tmp, 'config.json')) as f:
                self.assertEqual(ExperimentConfig.from_dict(json.load(f)), config)

        self.assertEqual(table.shape, (1, 3, len(CURVE_COLUMNS)))
        self.assertEqual(curve[0], 'N,scheme,mean_abs_error,std_error,measured_cost,thm1_bound,cor3_bound')
        self.assertEqual(len(curve), 4)
        self.assertEqual(len(curve[1].split(',')), 7)
        self.assertEqual(len(breakdown), 4)

        ## measured cost never exceeds N, and the lower bound equals a_N at the knots
        cost = table.sel(N=17, column='measured_cost')
        self.assertTrue(np.all(cost <= 17))
        npt.assert_array_equal(cost[1:], [17.0, 17.0])
        npt.assert_allclose(table.sel(N=17, column='thm1_bound'), inst.plan.a_N(17), rtol=1e-10)

    def test_empty(self):
        with tempfile.TemporaryDirectory() as tmp:
            table = error_curve(small_config(N_list=[]), out_dir=tmp)
            curve = read_lines(os.path.join(tmp, 'error_curve.csv'))
        self.assertEqual(table.shape, (0, 3, len(CURVE_COLUMNS)))
        self.assertEqual(curve, ['N,scheme,mean_abs_error,std_error,measured_cost,thm1_bound,cor3_bound'])

    def test_refusal(self):
        config = small_config(schemes=[dict(scheme='gap_refiner', budget=30), dict(scheme='euler')])
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertLogs('sdebound.harness', level='WARNING') as logs:
                table = error_curve(config, out_dir=tmp)
            curve = read_lines(os.path.join(tmp, 'error_curve.csv'))

        self.assertTrue(any('refusing gap_refiner' in line for line in logs.output))
        self.assertTrue(np.all(np.isnan(table.sel(N=17, scheme='gap_refiner'))))
        self.assertEqual(len(curve), 2)
        self.assertTrue(curve[1].startswith('17,euler,'))
        self.assertFalse(in_class(30.0, 17))
        self.assertTrue(in_class(17.0, 17))


class TestExports(unittest.TestCase):

    def test_bound_curve(self):
        with tempfile.TemporaryDirectory() as tmp:
            rows = export_bound_curve(small_config(), tmp)
            lines = read_lines(os.path.join(tmp, 'bound_curve.csv'))
            with open(os.path.join(tmp, 'psi.json')) as f:
                psi = PsiSpec.from_dict(json.load(f))

        self.assertEqual(len(rows), 24)
        self.assertEqual(len(lines), 25)
        self.assertEqual(psi.N0, 17)
        self.assertFalse(np.any(rows.extrapolated_flag))

        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(PlanError):
                export_bound_curve(small_config(psi_kind='affine'), tmp)

    def test_samples(self):
        config = small_config(fine_grid_exp=6, tail_grid_exp=4)
        with tempfile.TemporaryDirectory() as tmp:
            export_samples(config, 2, tmp)
            paths = read_lines(os.path.join(tmp, 'paths.csv'))
            path = read_lines(os.path.join(tmp, 'path.csv'))

        self.assertEqual(paths[0], 'path_index,t,w,x1,x2,x3,x4')
        self.assertEqual(len(paths), 1 + 2 * 65)
        self.assertEqual(path[0], 't,w')
        self.assertEqual(len(path), 66)
        self.assertTrue(paths[1].startswith('0,0,0,0,'))


class TestVerify(unittest.TestCase):

    CHECKS = (check_self_consistency, check_sine_moment, check_bridge_identity, check_variance_floor, check_psi,
              check_bound_curve)

    def test_passes(self):
        with tempfile.TemporaryDirectory() as tmp:
            report = verify_all(small_config(), out_dir=tmp, checks=self.CHECKS)
            with open(os.path.join(tmp, 'report.json')) as f:
                written = json.load(f)

        statuses = {e['name']: e['status'] for e in report['properties']}
        self.assertEqual(set(statuses.values()), {'pass'}, statuses)
        self.assertTrue(report['passed'])
        self.assertEqual(written['passed'], True)
        self.assertEqual(len(written['properties']), len(self.CHECKS))

    def test_remaining_checks(self):
        checks = (check_parts, check_isometry, check_bridge_laws, check_oracle, check_schemes, check_dominance)
        report = verify_all(small_config(verify=SMALL_VERIFY), checks=checks)

        statuses = {e['name']: e['status'] for e in report['properties']}
        self.assertEqual(len(statuses), len(checks))
        self.assertEqual(set(statuses.values()), {'pass'}, statuses)
        self.assertTrue(report['passed'])

        dominance = report['properties'][-1]
        self.assertEqual(dominance['name'], 'bound_dominance')
        self.assertGreater(dominance['detail']['cells'], 0)
        self.assertGreaterEqual(dominance['margin'], 0.0)

    def test_negative_control(self):
        report = verify_all(small_config(perturb_beta=2.0), checks=(check_self_consistency,))
        self.assertFalse(report['passed'])
        self.assertEqual(report['properties'][0]['status'], 'fail')

    def test_skipped(self):
        report = verify_all(small_config(psi_kind='constant'), checks=(check_self_consistency, check_psi))
        self.assertTrue(report['passed'])
        self.assertEqual({e['status'] for e in report['properties']}, {'skipped'})


class TestCli(unittest.TestCase):

    def _config_file(self, tmp, **kwargs):
        path = os.path.join(tmp, 'experiment.json')
        with open(path, 'w') as f:
            json.dump(dict(SMALL, **kwargs), f)
        return path

    def test_constants(self):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = self._config_file(tmp)
            out = os.path.join(tmp, 'out')
            self.assertEqual(cli.main(['constants', '--config', cfg, '--out', out]), 0)
            with open(os.path.join(out, 'constants.json')) as f:
                dct = json.load(f)
        self.assertEqual(dct['N0'], 17)
        self.assertEqual(set(dct), {'alpha', 'beta', 'gamma', 'c1', 'c2', 'N0'})

    def test_build_psi(self):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = self._config_file(tmp)
            out = os.path.join(tmp, 'out')
            self.assertEqual(cli.main(['build-psi', '--config', cfg, '--out', out]), 0)
            self.assertTrue(os.path.exists(os.path.join(out, 'psi.json')))
            self.assertTrue(os.path.exists(os.path.join(out, 'bound_curve.csv')))

    def test_verify_failure(self):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = self._config_file(tmp, perturb_beta=2.0, verify=SMALL_VERIFY)
            out = os.path.join(tmp, 'out')
            self.assertEqual(cli.main(['verify', '--config', cfg, '--out', out]), 1)
            with open(os.path.join(out, 'report.json')) as f:
                report = json.load(f)
        self.assertFalse(report['passed'])
        self.assertEqual(len(report['properties']), 12)
        statuses = {e['name']: e['status'] for e in report['properties']}
        self.assertEqual(statuses['self_consistency'], 'fail')

    def test_workers_identical(self):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = self._config_file(tmp, num_paths=8)
            out1, out4 = os.path.join(tmp, 'w1'), os.path.join(tmp, 'w4')
            self.assertEqual(cli.main(['error-curve', '--config', cfg, '--workers', '1', '--out', out1]), 0)
            self.assertEqual(cli.main(['error-curve', '--config', cfg, '--workers', '4', '--out', out4]), 0)
            for name in ('error_curve.csv', 'error_breakdown.csv'):
                self.assertTrue(filecmp.cmp(os.path.join(out1, name), os.path.join(out4, name), shallow=False), name)

    def test_errors(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(cli.main(['constants', '--config', os.path.join(tmp, 'missing.json')]), 2)
            cfg = self._config_file(tmp, prefix_length=10)
            self.assertEqual(cli.main(['build-psi', '--config', cfg, '--out', tmp]), 2)

        with self.assertRaises(SystemExit):
            cli.main(['unknown-command'])


if __name__ == '__main__':
    unittest.main()
