#include "ctms/lifted_model.hpp"

#include <cmath>
#include <fstream>

#include "ctms/csv.hpp"
#include "ctms/errors.hpp"

namespace ctms {

namespace {

using Triplet = Eigen::Triplet<double>;

SparseMatrix from_triplets(Eigen::Index rows, Eigen::Index cols,
                           const std::vector<Triplet>& triplets) {
    SparseMatrix m(rows, cols);
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    return m;
}

// Applies D^{-1} to a block-stacked quantity: block n becomes the sum of
// blocks 0..n.
Matrix cumulate_blocks(Matrix m, std::size_t block) {
    const auto b = static_cast<Eigen::Index>(block);
    for (Eigen::Index start = b; start < m.rows(); start += b) {
        m.middleRows(start, b) += m.middleRows(start - b, b);
    }
    return m;
}

}  // namespace

std::string to_string(ConstraintFamily family) {
    switch (family) {
        case ConstraintFamily::upstream_demand: return "upstream_demand";
        case ConstraintFamily::demand_density: return "demand_density";
        case ConstraintFamily::demand_capacity: return "demand_capacity";
        case ConstraintFamily::supply_density: return "supply_density";
        case ConstraintFamily::supply_capacity: return "supply_capacity";
        case ConstraintFamily::station_queue_demand: return "station_queue_demand";
        case ConstraintFamily::ramp_capacity: return "ramp_capacity";
        case ConstraintFamily::merge_supply_density: return "merge_supply_density";
        case ConstraintFamily::merge_supply_capacity: return "merge_supply_capacity";
        case ConstraintFamily::queue_capacity: return "queue_capacity";
    }
    return "unknown";
}

Estimates Estimates::exact(const HighwayConfig& cfg, const DemandProfile& demand) {
    return {cfg.station().split_ratio, cfg.station().service_delay_steps, demand};
}

Estimates Estimates::scaled(const HighwayConfig& cfg, const DemandProfile& demand, double r_beta,
                            double r_delta, double r_demand) {
    if (!(r_beta >= 0.0) || !(r_delta >= 0.0) || !(r_demand >= 0.0)) {
        throw ConfigError("scaling factors must be >= 0");
    }
    const auto& st = cfg.station();
    Estimates est;
    est.beta_es = r_beta * st.split_ratio;
    est.delta_es_steps = static_cast<std::size_t>(
        std::llround(r_delta * static_cast<double>(st.service_delay_steps)));
    est.demand_es = demand.scaled(r_demand);
    est.validate();
    return est;
}

void Estimates::validate() const {
    if (!(beta_es > 0.0 && beta_es < 1.0)) {
        throw ConfigError("estimated split ratio must lie in (0,1)");
    }
    if (delta_es_steps == 0) {
        throw ConfigError("estimated service delay must be at least one step");
    }
}

Vector LiftedQP::offset_increments_for(const Vector& x0, double s0) const {
    if (x0.size() != static_cast<Eigen::Index>(block())) {
        throw ModelFault("initial state has wrong dimension");
    }
    Vector d0 = s0 * inflow_response;
    d0.head(x0.size()) += x0;
    return d0;
}

Vector LiftedQP::accumulate(const Vector& increments) const {
    if (increments.size() != static_cast<Eigen::Index>(state_dim())) {
        throw ModelFault("increment vector has wrong dimension");
    }
    return cumulate_blocks(Matrix(increments), block()).col(0);
}

Vector LiftedQP::predict(const Vector& inputs) const { return predict(inputs, history); }

Vector LiftedQP::predict(const Vector& inputs, const Vector& phi_le) const {
    if (inputs.size() != static_cast<Eigen::Index>(input_dim()) ||
        phi_le.size() != static_cast<Eigen::Index>(horizon)) {
        throw ModelFault("prediction input has wrong dimension");
    }
    return offset + state_map * inputs + history_map * phi_le;
}

LiftedQP build_lifted(const HighwayConfig& cfg, const Estimates& est, const HorizonWindow& window,
                      const CostWeights& weights) {
    est.validate();
    const std::size_t N = cfg.num_cells();
    const std::size_t K = window.length;
    if (K == 0) {
        throw ConfigError("horizon must be positive");
    }
    if (est.delta_es_steps < K) {
        throw ConfigError("service delay estimate (" + std::to_string(est.delta_es_steps) +
                          " steps) shorter than the horizon (" + std::to_string(K) +
                          "): in-horizon service departures are unsupported");
    }
    if (window.measured.densities.size() != N || window.history_slice.size() != K) {
        throw ModelFault("horizon window does not match configuration dimensions");
    }
    for (double v : window.history_slice) {
        if (!(v >= 0.0)) {
            throw ModelFault("history slice entries must be >= 0");
        }
    }

    const auto& st = cfg.station();
    const std::size_t ell = st.exit_cell;
    const std::size_t j = st.merge_cell;
    const double T = cfg.sample_time_h();
    const double beta = est.beta_es;

    LiftedQP q;
    q.num_cells = N;
    q.horizon = K;
    const std::size_t nb = q.block();
    const auto nx = static_cast<Eigen::Index>(q.state_dim());
    const auto nu = static_cast<Eigen::Index>(q.input_dim());
    const auto kk = static_cast<Eigen::Index>(K);
    const auto col = [](std::size_t v) { return static_cast<Eigen::Index>(v); };

    // Recursion form.
    std::vector<Triplet> d_trip;
    std::vector<Triplet> b_trip;
    std::vector<Triplet> h_trip;
    q.offset_increments = Vector::Zero(nx);
    for (std::size_t c = 0; c < nb; ++c) {
        d_trip.emplace_back(col(c), col(c), 1.0);
    }
    for (std::size_t i = 0; i < N; ++i) {
        q.offset_increments[col(i)] = window.measured.densities[i];
    }
    q.offset_increments[col(N)] = window.measured.in_station;
    q.offset_increments[col(N + 1)] = window.measured.exit_queue;

    const double s0 = window.station_inflow_at_start;
    q.station_inflow_at_start = s0;
    q.inflow_response = Vector::Zero(nx);
    for (std::size_t n = 0; n < K; ++n) {
        const std::size_t next = (n + 1) * nb;
        for (std::size_t c = 0; c < nb; ++c) {
            d_trip.emplace_back(col(next + c), col(next + c), 1.0);
            d_trip.emplace_back(col(next + c), col(n * nb + c), -1.0);
        }
        for (std::size_t i = 0; i < N; ++i) {
            const double gain = T / cfg.cells()[i].length_km;
            b_trip.emplace_back(col(next + i), col(q.flow_index(n, i)), gain);
            b_trip.emplace_back(col(next + i), col(q.flow_index(n, i + 1)), -gain);
            if (i == j) {
                b_trip.emplace_back(col(next + i), col(q.ramp_index(n)), gain);
            }
        }
        // s(k0+n) = beta^n s0 + sum_{m=1}^{n} beta^m phi_{ell+1}(k0+n-m)
        const double exit_gain = T / cfg.cells()[ell].length_km;
        double power = beta;
        for (std::size_t m = 1; m <= n; ++m, power *= beta) {
            const auto source = col(q.flow_index(n - m, ell + 1));
            b_trip.emplace_back(col(next + ell), source, -exit_gain * power);
            b_trip.emplace_back(col(next + N), source, T * power);
        }
        const double decay = std::pow(beta, static_cast<double>(n));
        q.inflow_response[col(next + ell)] = -exit_gain * decay;
        q.inflow_response[col(next + N)] = T * decay;
        b_trip.emplace_back(col(next + N + 1), col(q.ramp_index(n)), -T);
        h_trip.emplace_back(col(next + N), col(n), -T);
        h_trip.emplace_back(col(next + N + 1), col(n), T);
    }
    q.offset_increments += s0 * q.inflow_response;
    q.dynamics = from_triplets(nx, nx, d_trip);
    q.input_increments = from_triplets(nx, nu, b_trip);
    q.history_increments = from_triplets(nx, kk, h_trip);

    q.state_map = cumulate_blocks(Matrix(q.input_increments), nb);
    q.history_map = cumulate_blocks(Matrix(q.history_increments), nb);
    q.offset = cumulate_blocks(Matrix(q.offset_increments), nb).col(0);
    q.history = Eigen::Map<const Vector>(window.history_slice.data(), kk);

    // Relaxed inequality rows, grouped by step then interface.
    std::vector<Triplet> ax;
    std::vector<Triplet> au;
    std::vector<double> rhs;
    auto add_row = [&](ConstraintFamily family, std::size_t iface, std::size_t n, double bound) {
        q.rows.push_back({family, iface, n});
        rhs.push_back(bound);
        return col(rhs.size() - 1);
    };
    const auto upstream = [&](std::size_t n) {
        return est.demand_es.at(window.start_step + n);
    };
    for (std::size_t n = 0; n < K; ++n) {
        for (std::size_t i = 0; i <= N; ++i) {
            const auto phi = col(q.flow_index(n, i));
            if (i == 0) {
                au.emplace_back(add_row(ConstraintFamily::upstream_demand, i, n, upstream(n)), phi,
                                1.0);
            } else {
                const auto& up = cfg.cells()[i - 1];
                const double split = (i - 1 == ell) ? beta : 0.0;
                const auto r1 = add_row(ConstraintFamily::demand_density, i, n, 0.0);
                au.emplace_back(r1, phi, 1.0);
                ax.emplace_back(r1, col(q.density_index(n, i - 1)),
                                -(1.0 - split) * up.free_flow_speed);
                au.emplace_back(add_row(ConstraintFamily::demand_capacity, i, n, up.capacity), phi,
                                1.0);
            }
            if (i == N) {
                continue;
            }
            const auto& c = cfg.cells()[i];
            if (i == j) {
                const auto r = col(q.ramp_index(n));
                const auto rq = add_row(ConstraintFamily::station_queue_demand, i, n,
                                        window.history_slice[n]);
                au.emplace_back(rq, r, 1.0);
                ax.emplace_back(rq, col(q.queue_index(n)), -1.0 / T);
                au.emplace_back(add_row(ConstraintFamily::ramp_capacity, i, n, st.ramp_capacity), r,
                                1.0);
                const auto rs = add_row(ConstraintFamily::merge_supply_density, i, n,
                                        c.congestion_wave_speed * c.jam_density);
                au.emplace_back(rs, phi, 1.0);
                au.emplace_back(rs, r, 1.0);
                ax.emplace_back(rs, col(q.density_index(n, i)), c.congestion_wave_speed);
                const auto rc = add_row(ConstraintFamily::merge_supply_capacity, i, n, c.capacity);
                au.emplace_back(rc, phi, 1.0);
                au.emplace_back(rc, r, 1.0);
            } else {
                const auto rs = add_row(ConstraintFamily::supply_density, i, n,
                                        c.congestion_wave_speed * c.jam_density);
                au.emplace_back(rs, phi, 1.0);
                ax.emplace_back(rs, col(q.density_index(n, i)), c.congestion_wave_speed);
                au.emplace_back(add_row(ConstraintFamily::supply_capacity, i, n, c.capacity), phi,
                                1.0);
            }
        }
        // e(k0+n+1) <= e_max; e(k0) is measured and not constrained.
        ax.emplace_back(add_row(ConstraintFamily::queue_capacity, j, n + 1, st.queue_capacity),
                        col(q.queue_index(n + 1)), 1.0);
    }
    const auto m = col(rhs.size());
    q.ineq_state = from_triplets(m, nx, ax);
    q.ineq_input = from_triplets(m, nu, au);
    q.ineq_rhs = Eigen::Map<const Vector>(rhs.data(), m);
    if (rhs.size() != constraint_row_count(N, K)) {
        throw ModelFault("constraint row audit failed");
    }

    // Cost.
    q.quad_scale = weights.quad_scale;
    q.quad_weight.resize(nx);
    q.lin_state_cost = Vector::Zero(nx);
    q.reference = Vector::Constant(nx, weights.state_reference);
    for (std::size_t n = 0; n <= K; ++n) {
        for (std::size_t i = 0; i < N; ++i) {
            const auto& c = cfg.cells()[i];
            q.quad_weight[col(q.density_index(n, i))] = weights.w_rho * c.length_km / c.jam_density;
            q.lin_state_cost[col(q.density_index(n, i))] = c.length_km;
        }
        q.quad_weight[col(q.station_index(n))] = weights.w_l / st.station_capacity;
        q.quad_weight[col(q.queue_index(n))] = weights.w_e / st.queue_capacity;
    }
    q.lin_input_cost.resize(nu);
    for (std::size_t n = 0; n < K; ++n) {
        for (std::size_t i = 0; i <= N; ++i) {
            const double length = i == 0 ? weights.upstream_length : cfg.cells()[i - 1].length_km;
            q.lin_input_cost[col(q.flow_index(n, i))] = weights.lambda * length;
        }
        q.lin_input_cost[col(q.ramp_index(n))] = weights.lambda * weights.w_r;
    }
    return q;
}

LiftedQP ground_truth_lifted(const HighwayConfig& cfg, const DemandProfile& demand,
                             const HorizonWindow& window, const CostWeights& weights) {
    return build_lifted(cfg, Estimates::exact(cfg, demand), window, weights);
}

void set_data_rows(LiftedQP& lifted, const std::vector<double>& demand_slice,
                   const std::vector<double>& phi_le_slice) {
    if (demand_slice.size() != lifted.horizon || phi_le_slice.size() != lifted.horizon) {
        throw ModelFault("data row slices must have horizon length");
    }
    for (std::size_t r = 0; r < lifted.rows.size(); ++r) {
        const auto& row = lifted.rows[r];
        const auto idx = static_cast<Eigen::Index>(r);
        if (row.family == ConstraintFamily::upstream_demand) {
            lifted.ineq_rhs[idx] = demand_slice[row.step];
        } else if (row.family == ConstraintFamily::station_queue_demand) {
            lifted.ineq_rhs[idx] = phi_le_slice[row.step];
        }
    }
}

void write_lifted_triplets(const std::filesystem::path& path, const LiftedQP& lifted) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    auto sparse = [&](const char* name, const SparseMatrix& m) {
        out << "# " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
                out << it.row() << ' ' << it.col() << ' ' << csv::format_number(it.value()) << '\n';
            }
        }
    };
    auto dense = [&](const char* name, const Matrix& m) {
        out << "# " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                if (m(r, c) != 0.0) {
                    out << r << ' ' << c << ' ' << csv::format_number(m(r, c)) << '\n';
                }
            }
        }
    };
    dense("state_map", lifted.state_map);
    dense("history_map", lifted.history_map);
    dense("offset", lifted.offset);
    dense("history", lifted.history);
    sparse("dynamics", lifted.dynamics);
    sparse("input_increments", lifted.input_increments);
    sparse("history_increments", lifted.history_increments);
    dense("offset_increments", lifted.offset_increments);
    sparse("ineq_state", lifted.ineq_state);
    sparse("ineq_input", lifted.ineq_input);
    dense("ineq_rhs", lifted.ineq_rhs);
    dense("quad_weight", lifted.quad_weight);
    dense("lin_state_cost", lifted.lin_state_cost);
    dense("lin_input_cost", lifted.lin_input_cost);
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

}  // namespace ctms
