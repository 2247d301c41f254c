#!/usr/bin/env python3
"""
Test script untuk memverifikasi semua komponen Young-measure lab
"""

import logging
import sys
from pathlib import Path

import numpy as np

# Add current directory to Python path
sys.path.append(str(Path(__file__).parent))

import gallery
from compactification import AtomRegistry, metric_d, spec_from_ids, sphere_spec
from config import SCENARIO_CELLS
from convexity import gk_envelope, rank_one_violation
from integrand_catalog import get_integrand
from measure_core import DiscreteMeasure, VectorDiscreteMeasure, lebesgue_grid
from transform import to_ball, to_ball_coords
from transport import lip_dual_distance, two_point_value
from young import elementary_measure, estimate, fiber_distance, pair


class LabTester:
    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def test_all_components(self):
        """Test semua komponen lab"""
        print("🧪 Memulai testing semua komponen Young-measure lab...\n")

        results = [
            ("Transform", self.test_transform()),
            ("Compactification", self.test_compactification()),
            ("Transport", self.test_transport()),
            ("Young Measure", self.test_young()),
            ("Convexity", self.test_convexity()),
        ]

        print("\n📊 **Hasil Testing:**\n")
        for component, success in results:
            status = "✅ PASS" if success else "❌ FAIL"
            print(f"{component}: {status}")

        passed = sum(1 for _, success in results if success)
        total = len(results)

        print(f"\n🎯 **Summary:** {passed}/{total} komponen berhasil")

        if passed == total:
            print("🎉 Semua komponen berfungsi dengan baik!")
            print("🚀 Lab siap digunakan!")
        else:
            print("⚠️ Beberapa komponen gagal. Silakan cek error di atas.")

        return passed == total

    def test_transform(self):
        """Test transform T"""
        try:
            print("🔧 Testing Transform...")
            area = get_integrand("area", 1)
            g = to_ball(area)
            zhat = to_ball_coords(np.array([[3.0]]))
            value = float(g(zhat)[0])
            expected = float(area.transformed(np.array([[3.0]]))[0])
            if abs(value - expected) > 1e-12:
                print(f"  ❌ T[area] mismatch: {value} vs {expected}")
                return False
            print(f"  ✅ T[area](3/4) = {value:.6f}")
            return True
        except Exception as e:
            print(f"  ❌ Error testing transform: {e}")
            return False

    def test_compactification(self):
        """Test metric dan registry"""
        try:
            print("🧭 Testing Compactification...")
            spec = spec_from_ids(["logsin"], 1)
            d = float(metric_d(np.array([[0.2]]), np.array([[-0.3]]), spec)[0])
            print(f"  ✅ d(0.2, -0.3) = {d:.6f}")
            registry = AtomRegistry(sphere_spec(1))
            plus = registry.atom_for_direction([1.0])
            minus = registry.atom_for_direction([-1.0])
            if plus == minus:
                print("  ❌ +inf dan -inf jatuh ke atom yang sama")
                return False
            print(f"  ✅ Atom registry: {len(registry)} atoms")
            return True
        except Exception as e:
            print(f"  ❌ Error testing compactification: {e}")
            return False

    def test_transport(self):
        """Test Kantorovich LP"""
        try:
            print("🚚 Testing Transport...")
            t = 0.5
            value = lip_dual_distance(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([t]))
            if abs(value - two_point_value(t)) > 1e-7:
                print(f"  ❌ Two-point value {value} != {two_point_value(t)}")
                return False
            print(f"  ✅ ||delta_0 - delta_0.5||_K = {value:.6f}")
            return True
        except Exception as e:
            print(f"  ❌ Error testing transport: {e}")
            return False

    def test_young(self):
        """Test estimasi dan pairing"""
        try:
            print("📈 Testing Young Measure...")
            seq = gallery.oscillation((128,), 512, SCENARIO_CELLS // 2)
            nu = estimate(seq)
            target = DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5])
            gap = max(fiber_distance(f, target) for f in nu.osc.fibers)
            print(f"  ✅ Oscillation fiber gap: {gap:.2e}")
            mu = lebesgue_grid(64)
            xi = elementary_measure(VectorDiscreteMeasure([[0.5]], [[1.0]]), mu)
            value = pair(xi, get_integrand("area", 1))
            print(f"  ✅ <xi, area> = {value:.6f}")
            return gap < 0.05 and abs(value - 2.0) < 1e-9
        except Exception as e:
            print(f"  ❌ Error testing young measure: {e}")
            return False

    def test_convexity(self):
        """Test lamination envelope"""
        try:
            print("🧮 Testing Convexity...")
            res = gk_envelope(1.0, n=5, iters=16)
            value = res.value_at_center()
            violation = rank_one_violation(res)
            print(f"  ✅ R g_1(0) = {value:.4f}, violation {violation:.2e}")
            return value > 0
        except Exception as e:
            print(f"  ❌ Error testing convexity: {e}")
            return False


def main():
    """Main function untuk testing"""
    print("🧪 Young-measure Lab Component Tester\n")

    try:
        tester = LabTester()
        success = tester.test_all_components()

        if success:
            print("\n🎉 **Testing selesai dengan sukses!**")
            print("🚀 Lab siap digunakan dengan python main.py scenario all")
        else:
            print("\n⚠️ **Testing selesai dengan beberapa error**")
            print("🔧 Silakan perbaiki error sebelum menjalankan scenario")
        return success

    except Exception as e:
        print(f"\n❌ **Fatal error saat testing:** {e}")
        print("🔍 Cek log untuk detail error")
        return False


if __name__ == "__main__":
    try:
        sys.exit(0 if main() else 1)
    except KeyboardInterrupt:
        print("\n🛑 Testing dihentikan oleh user")
    except Exception as e:
        print(f"❌ Fatal error: {e}")
        sys.exit(1)
