#include "opal/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "opal/augment.hpp"
#include "opal/batching.hpp"
#include "opal/metrics.hpp"
#include "opal/snapshot.hpp"
#include "opal/tape.hpp"
#include "opal/tsne.hpp"

namespace opal {

namespace {

using nlohmann::json;

std::uint64_t fold_seed(std::uint64_t seed, int fold) { return mix_seed(seed, static_cast<std::uint64_t>(fold) + 1); }

struct StepInputs {
    Matrix view1;
    Matrix view2;
    std::vector<SamplePair> pairs;
    double tau = 1.0;
    double margin = 2.0;
    bool supervised = false;
    std::vector<ClassIndex> labels;
    std::optional<Matrix> strong;
    std::vector<ClassIndex> pseudo;
    double grad_clip = 0.0;
    int epoch = 0;    // for error messages
    int network = 0;
};

struct StepOutput {
    LossBreakdown loss;
    double lr = 0.0;
    double grad_norm = 0.0;  // before clipping
};

StepOutput train_step(NetState& net, const StepInputs& in) {
    Tape tape;
    BoundNetwork bn(tape, net.params);
    const auto f1 = bn.encode(tape.constant(in.view1));
    const auto f2 = bn.encode(tape.constant(in.view2));
    const auto cl = tape.contrastive(bn.contrastive_head(f1), bn.contrastive_head(f2), in.pairs, in.tau, in.margin);
    auto root = cl;
    double s_value = 0.0, ssl_value = 0.0;
    if (in.supervised) {
        const auto s = tape.softmax_cross_entropy(bn.classifier_head(f1), in.labels);
        s_value = tape.scalar(s);
        root = tape.add(root, s);
    }
    if (in.strong) {
        const auto ssl = tape.softmax_cross_entropy(bn.classifier_head(bn.encode(tape.constant(*in.strong))), in.pseudo);
        ssl_value = tape.scalar(ssl);
        root = tape.add(root, ssl);
    }
    StepOutput out;
    out.loss = LossBreakdown::make(tape.scalar(cl), s_value, ssl_value);
    if (!std::isfinite(out.loss.total)) {
        throw TrainingError(fmt::format("network{} diverged at epoch {} (l_cl {:.4g}, l_s {:.4g}, l_ssl {:.4g}); lower lr0",
                                        in.network, in.epoch, out.loss.l_cl, s_value, ssl_value));
    }
    tape.backward(root);
    auto grads = bn.gradients();
    out.grad_norm = clip_gradients(grads, in.grad_clip);
    out.lr = sgd_step(net.params, grads, net.optimizer);
    return out;
}

json loss_summary(std::size_t steps, const LossBreakdown& sum, double lr, double max_grad_norm) {
    const double n = steps == 0 ? 1.0 : static_cast<double>(steps);
    return {{"steps", steps}, {"loss", sum.total / n}, {"l_cl", sum.l_cl / n}, {"l_s", sum.l_s / n},
            {"l_ssl", sum.l_ssl / n}, {"lr", lr}, {"max_grad_norm", max_grad_norm}};
}

void accumulate(LossBreakdown& acc, const LossBreakdown& l) {
    acc.l_cl += l.l_cl;
    acc.l_s += l.l_s;
    acc.l_ssl += l.l_ssl;
    acc.total += l.total;
}

json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    m.data() = j.at("data").get<std::vector<double>>();
    if (m.data().size() != m.rows() * m.cols()) throw std::runtime_error("matrix json size mismatch");
    return m;
}

json query_to_json(const ActiveQuery& q) {
    json items = json::array();
    for (const auto& it : q.items) items.push_back({it.id, it.confidence});
    return {{"k_active", q.k_active}, {"items", items}};
}

ActiveQuery query_from_json(const json& j) {
    ActiveQuery q;
    q.k_active = j.at("k_active").get<std::size_t>();
    for (const auto& it : j.at("items")) q.items.push_back({it.at(0).get<SampleId>(), it.at(1).get<double>()});
    return q;
}

// Deterministic perturbation of coinciding feature rows so the projection
// can proceed; only the listed ids move.
void separate_duplicates(Matrix& x, const std::vector<SampleId>& ids, const std::vector<SampleId>& dup,
                         std::uint64_t seed) {
    Rng rng(seed);
    double scale = 0.0;
    for (double v : x.data()) scale = std::max(scale, std::abs(v));
    const double eps = 1e-9 * (1.0 + scale);
    for (auto id : dup) {
        auto it = std::lower_bound(ids.begin(), ids.end(), id);
        const auto r = static_cast<std::size_t>(it - ids.begin());
        for (auto& v : x.row(r)) v += eps * rng.normal();
    }
}

} // namespace

std::string to_string(Phase phase) {
    switch (phase) {
    case Phase::Warmup: return "WARMUP";
    case Phase::Main: return "MAIN";
    case Phase::WaitingForLabels: return "WAITING_FOR_LABELS";
    case Phase::Done: return "DONE";
    }
    return "UNKNOWN";
}

Phase phase_from_string(const std::string& s) {
    if (s == "WARMUP") return Phase::Warmup;
    if (s == "MAIN") return Phase::Main;
    if (s == "WAITING_FOR_LABELS") return Phase::WaitingForLabels;
    if (s == "DONE") return Phase::Done;
    throw std::invalid_argument("unknown phase '" + s + "'");
}

bool interval_due(int epoch, int w_epochs, int e_int) {
    if (epoch <= w_epochs) return false;
    return epoch % e_int == 0 || epoch == w_epochs + 1;
}

ClassIndex ensemble_label(std::span<const double> pv1, std::span<const double> pv2) {
    ClassIndex best = 0;
    double best_v = -1.0;
    for (std::size_t c = 0; c < pv1.size(); ++c) {
        const double v = (pv1[c] + pv2[c]) / 2.0;
        if (v > best_v) {
            best_v = v;
            best = static_cast<ClassIndex>(c);
        }
    }
    return best;
}

std::vector<ClassIndex> ensemble_predict(const NetworkParams& net1, const NetworkParams& net2, const Matrix& x) {
    const Matrix q1 = classify(net1, x);
    const Matrix q2 = classify(net2, x);
    std::vector<ClassIndex> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = ensemble_label(softmax(q1.row(i)), softmax(q2.row(i)));
    return out;
}

json to_json(const PropagationResult& prop) {
    json rows = json::array();
    for (const auto& e : prop.entries) {
        rows.push_back({e.id, e.pseudo_label, e.cost, e.runner_up ? json(*e.runner_up) : json(nullptr), e.confidence,
                        e.root});
    }
    return rows;
}

PropagationResult propagation_from_json(const json& j) {
    PropagationResult p;
    for (const auto& r : j) {
        PropagationEntry e;
        e.id = r.at(0).get<SampleId>();
        e.pseudo_label = r.at(1).get<ClassIndex>();
        e.cost = r.at(2).get<double>();
        if (!r.at(3).is_null()) e.runner_up = r.at(3).get<double>();
        e.confidence = r.at(4).get<double>();
        e.root = r.at(5).get<SampleId>();
        p.entries.push_back(e);
    }
    return p;
}

json FoldState::to_json() const {
    json j;
    j["fold"] = fold;
    j["epoch"] = epoch;
    j["phase"] = to_string(phase);
    j["c_active"] = c_active;
    j["n_active"] = n_active;
    j["total_steps"] = total_steps;
    j["store"] = store.to_json();
    j["net_rng"] = {nets[0].rng.serialize(), nets[1].rng.serialize()};
    j["batch_rng"] = batch_rng.serialize();
    j["pl"] = {pl[0].to_json(), pl[1].to_json()};
    if (pending) {
        const auto& p = *pending;
        j["pending"] = {{"epoch", p.epoch},
                        {"coords", {matrix_to_json(p.coords[0]), matrix_to_json(p.coords[1])}},
                        {"props", {opal::to_json(p.props[0]), opal::to_json(p.props[1])}},
                        {"query", query_to_json(p.query)},
                        {"warnings", p.warnings},
                        {"query_sent", p.query_sent},
                        {"barrier_saved", p.barrier_saved}};
        json kl = json::array();
        for (const auto& hist : p.kl) {
            json h = json::array();
            for (const auto& s : hist) h.push_back({s.iter, s.kl});
            kl.push_back(h);
        }
        j["pending"]["kl"] = kl;
    }
    json cps = json::array();
    for (const auto& c : checkpoints) {
        cps.push_back({{"fraction", c.fraction},
                       {"labeled", c.labeled},
                       {"epoch", c.epoch},
                       {"accuracy", c.accuracy},
                       {"kappa", c.kappa}});
    }
    j["checkpoints"] = cps;
    j["final_accuracy"] = final_accuracy ? json(*final_accuracy) : json(nullptr);
    j["final_kappa"] = final_kappa ? json(*final_kappa) : json(nullptr);
    return j;
}

FoldState FoldState::from_json(const json& j, std::array<NetState, 2> nets) {
    FoldState s;
    s.fold = j.at("fold").get<int>();
    s.epoch = j.at("epoch").get<int>();
    s.phase = phase_from_string(j.at("phase").get<std::string>());
    s.c_active = j.at("c_active").get<std::size_t>();
    s.n_active = j.at("n_active").get<std::size_t>();
    s.total_steps = j.at("total_steps").get<std::uint64_t>();
    s.store = LabelStore::from_json(j.at("store"));
    s.nets = std::move(nets);
    for (int i = 0; i < 2; ++i) s.nets[i].rng = Rng::deserialize(j.at("net_rng").at(i).get<std::string>());
    s.batch_rng = Rng::deserialize(j.at("batch_rng").get<std::string>());
    for (int i = 0; i < 2; ++i) s.pl[i] = PseudoLabelSet::from_json(j.at("pl").at(i));
    if (j.contains("pending")) {
        const auto& pj = j.at("pending");
        PendingInterval p;
        p.epoch = pj.at("epoch").get<int>();
        for (int i = 0; i < 2; ++i) {
            p.coords[i] = matrix_from_json(pj.at("coords").at(i));
            p.props[i] = propagation_from_json(pj.at("props").at(i));
            for (const auto& k : pj.at("kl").at(i)) p.kl[i].push_back({k.at(0).get<int>(), k.at(1).get<double>()});
        }
        p.query = query_from_json(pj.at("query"));
        p.warnings = pj.at("warnings").get<std::vector<std::string>>();
        p.query_sent = pj.at("query_sent").get<bool>();
        p.barrier_saved = pj.at("barrier_saved").get<bool>();
        s.pending = std::move(p);
    }
    for (const auto& c : j.at("checkpoints")) {
        s.checkpoints.push_back({c.at("fraction").get<double>(), c.at("labeled").get<std::size_t>(),
                                 c.at("epoch").get<int>(), c.at("accuracy").get<double>(),
                                 c.at("kappa").get<double>()});
    }
    if (!j.at("final_accuracy").is_null()) s.final_accuracy = j.at("final_accuracy").get<double>();
    if (!j.at("final_kappa").is_null()) s.final_kappa = j.at("final_kappa").get<double>();
    return s;
}

std::uint64_t planned_total_steps(const RunConfig& config, std::size_t seed_labeled, std::size_t unlabeled,
                                  std::size_t n_active, int num_classes) {
    const auto b = config.batch_size;
    const auto w = static_cast<std::uint64_t>(config.w_epochs);
    const auto main_epochs = static_cast<std::uint64_t>(config.n_epochs - config.w_epochs);
    const std::uint64_t warm = w * batch_count(seed_labeled, b);
    const std::size_t max_pl = ceil_fraction(config.pl_frac, unlabeled) + static_cast<std::size_t>(num_classes);
    const std::uint64_t per_main = std::max(batch_count(seed_labeled + n_active, b), batch_count(max_pl, b));
    return warm + main_epochs * per_main;
}

FoldTrainer::FoldTrainer(const RunConfig& config, const Dataset& dataset, const Fold& fold, int fold_index,
                         TrainerHooks hooks)
    : config_(config), dataset_(dataset), fold_(fold), fold_index_(fold_index), hooks_(std::move(hooks)) {
    train_ids_ = fold.train;
    std::sort(train_ids_.begin(), train_ids_.end());
    train_x_ = dataset.gather(train_ids_);
    test_x_ = dataset.gather(fold.test);
    for (auto id : fold.test) test_y_.push_back(dataset.label_of(id));
}

Arch FoldTrainer::arch() const {
    Arch a;
    a.input_dim = dataset_.dim();
    a.encoder = config_.encoder;
    a.contrastive = config_.contrastive_head;
    a.num_classes = static_cast<std::size_t>(dataset_.num_classes());
    a.validate();
    return a;
}

FoldState FoldTrainer::initial_state(std::size_t n_active) const {
    FoldState s;
    s.fold = fold_index_;
    s.n_active = n_active;
    s.store = LabelStore(train_ids_, dataset_.num_classes());
    for (auto id : fold_.seed_labeled) s.store.set_seed(id, dataset_.label_of(id));
    const std::size_t seeds = s.store.labeled_count();
    s.total_steps = planned_total_steps(config_, seeds, train_ids_.size() - seeds, n_active, dataset_.num_classes());
    const auto fs = fold_seed(config_.seed, fold_index_);
    for (int i = 0; i < 2; ++i) {
        auto& net = s.nets[i];
        net.params = init_params(arch(), mix_seed(fs, 1 + static_cast<std::uint64_t>(i)));
        net.optimizer = OptimizerState::for_params(net.params, s.total_steps, config_.lr0, config_.momentum,
                                                   config_.weight_decay, config_.nesterov);
        net.rng = Rng(mix_seed(fs, 11 + static_cast<std::uint64_t>(i)));
    }
    s.batch_rng = Rng(mix_seed(fs, 21));
    s.pl[0].source_network = 1;
    s.pl[1].source_network = 2;
    return s;
}

void FoldTrainer::emit(json event) const {
    if (hooks_.log) hooks_.log->append(event);
}

json FoldTrainer::pending_items(const FoldState& state) const {
    json items = json::array();
    if (!state.pending || state.phase != Phase::WaitingForLabels) return items;
    const auto& p = *state.pending;
    for (const auto& q : p.query.items) {
        auto it = std::lower_bound(train_ids_.begin(), train_ids_.end(), q.id);
        const auto r = static_cast<std::size_t>(it - train_ids_.begin());
        json item{{"id", q.id}, {"v", q.confidence}};
        auto ref = dataset_.payload_ref(q.id);
        item["payload_ref"] = ref ? json(*ref) : json(nullptr);
        item["coords"] = {{"network1", {p.coords[0](r, 0), p.coords[0](r, 1)}},
                          {"network2", {p.coords[1](r, 0), p.coords[1](r, 1)}}};
        items.push_back(item);
    }
    return items;
}

void FoldTrainer::publish(const FoldState& state, std::optional<json> summary) const {
    if (!hooks_.status) return;
    StatusUpdate u;
    u.fold = state.fold;
    u.epoch = state.epoch;
    u.phase = state.phase;
    u.c_active = state.c_active;
    u.n_active = state.n_active;
    u.labeled = state.store.labeled_count();
    u.pending = pending_items(state);
    u.epoch_summary = std::move(summary);
    for (int i = 0; i < 2; ++i) u.projection_csv[i] = latest_projection(state, i + 1);
    hooks_.status(u);
}

void FoldTrainer::warmup_epoch(FoldState& state, int epoch, json& summary) {
    const auto labeled = state.store.labeled_ids();
    const auto batches = make_batches(labeled, config_.batch_size, state.batch_rng);
    const double tau = class_weight_tau(dataset_.num_classes());
    json nets = json::array();
    std::vector<std::string> warnings;
    for (int i = 0; i < 2; ++i) {
        auto& net = state.nets[i];
        LossBreakdown sum;
        double lr = 0.0;
        double max_norm = 0.0;
        for (const auto& b : batches) {
            StepInputs in;
            const Matrix x = dataset_.gather(b);
            in.view1 = augment_rows(x, config_.weak, net.rng);
            in.view2 = augment_rows(x, config_.weak, net.rng);
            in.pairs = make_pairs(b, state.store);
            in.tau = tau;
            in.margin = config_.margin;
            in.epoch = epoch;
            in.network = i + 1;
            in.grad_clip = config_.grad_clip;
            if (in.pairs.empty()) warnings.push_back("empty_pair_set");
            const auto out = train_step(net, in);
            accumulate(sum, out.loss);
            lr = out.lr;
            max_norm = std::max(max_norm, out.grad_norm);
            if (hooks_.observer) {
                StepRecord rec;
                rec.fold = fold_index_;
                rec.epoch = epoch;
                rec.network = i + 1;
                rec.warmup = true;
                rec.evaluated_cl = true;
                rec.labeled_batch = b;
                rec.loss = out.loss;
                hooks_.observer->on_step(rec);
            }
        }
        nets.push_back(loss_summary(batches.size(), sum, lr, max_norm));
    }
    summary["nets"] = nets;
    summary["warnings"] = warnings;
}

void FoldTrainer::main_epoch(FoldState& state, int epoch, json& summary) {
    const auto labeled = state.store.labeled_ids();
    const auto lb = make_batches(labeled, config_.batch_size, state.batch_rng);
    std::array<int, 2> source{};
    std::array<std::vector<Batch>, 2> pb;
    for (int i = 0; i < 2; ++i) {
        source[i] = config_.cross_training ? 2 - i : i + 1;  // network 1 reads set 2 and vice versa
        pb[i] = make_batches(state.pl[source[i] - 1].ids(), config_.batch_size, state.batch_rng);
    }
    const double tau = class_weight_tau(dataset_.num_classes());
    json nets = json::array();
    std::vector<std::string> warnings;
    for (int i = 0; i < 2; ++i) {
        auto& net = state.nets[i];
        const auto& pl = state.pl[source[i] - 1];
        std::map<SampleId, ClassIndex> pseudo;
        for (const auto& e : pl.entries) pseudo[e.id] = e.label;
        if (pb[i].empty()) warnings.push_back("empty_pseudo_label_set_network" + std::to_string(i + 1));
        const std::size_t steps = std::max(lb.size(), pb[i].size());
        LossBreakdown sum;
        double lr = 0.0;
        double max_norm = 0.0;
        for (std::size_t s = 0; s < steps; ++s) {
            const auto& bl = lb[s % lb.size()];
            StepInputs in;
            const Matrix x = dataset_.gather(bl);
            in.view1 = augment_rows(x, config_.weak, net.rng);
            in.view2 = augment_rows(x, config_.weak, net.rng);
            in.pairs = make_pairs(bl, state.store);
            in.tau = tau;
            in.margin = config_.margin;
            in.supervised = true;
            in.epoch = epoch;
            in.network = i + 1;
            in.grad_clip = config_.grad_clip;
            for (auto id : bl) in.labels.push_back(state.store.label(id));
            if (in.pairs.empty()) warnings.push_back("empty_pair_set");
            const Batch* bp = pb[i].empty() ? nullptr : &pb[i][s % pb[i].size()];
            if (bp) {
                in.strong = augment_rows(dataset_.gather(*bp), config_.strong, net.rng);
                for (auto id : *bp) in.pseudo.push_back(pseudo.at(id));
            }
            const auto out = train_step(net, in);
            accumulate(sum, out.loss);
            lr = out.lr;
            max_norm = std::max(max_norm, out.grad_norm);
            if (hooks_.observer) {
                StepRecord rec;
                rec.fold = fold_index_;
                rec.epoch = epoch;
                rec.network = i + 1;
                rec.evaluated_cl = true;
                rec.evaluated_s = true;
                rec.evaluated_ssl = bp != nullptr;
                rec.pl_source = source[i];
                rec.labeled_batch = bl;
                if (bp) rec.pl_batch = *bp;
                rec.loss = out.loss;
                hooks_.observer->on_step(rec);
            }
        }
        auto js = loss_summary(steps, sum, lr, max_norm);
        js["pl_source"] = source[i];
        js["pl_size"] = pl.size();
        nets.push_back(js);
    }
    summary["nets"] = nets;
    summary["warnings"] = warnings;
}

void FoldTrainer::start_interval(FoldState& state, int epoch) {
    PendingInterval p;
    p.epoch = epoch;
    std::vector<Prototype> protos;
    for (auto id : state.store.labeled_ids()) protos.push_back({id, state.store.label(id)});
    std::array<ActiveQuery, 2> queries;
    const auto fs = fold_seed(config_.seed, fold_index_);
    for (int i = 0; i < 2; ++i) {
        Matrix features = encode(state.nets[i].params, train_x_);
        const auto tsne_seed = mix_seed(mix_seed(fs, 100 + static_cast<std::uint64_t>(epoch)), 1 + static_cast<std::uint64_t>(i));
        Projection2D proj;
        for (int attempt = 0;; ++attempt) {
            try {
                proj = project(features, train_ids_, config_.tsne, tsne_seed);
                break;
            } catch (const DegenerateRow& e) {
                if (attempt >= 3) throw;
                p.warnings.push_back("network" + std::to_string(i + 1) + ": separated " +
                                     std::to_string(e.ids().size()) + " coinciding feature rows");
                separate_duplicates(features, train_ids_, e.ids(), mix_seed(tsne_seed, 7 + static_cast<std::uint64_t>(attempt)));
            }
        }
        p.coords[i] = proj.coords;
        p.kl[i] = proj.kl_history;
        p.props[i] = propagate(proj.coords, train_ids_, protos, config_.runner_up);
        queries[i] = select_uncertain(p.props[i], config_.k_active);
    }
    const auto merged =
        merge_active(queries[0], queries[1], config_.k_active, [&](SampleId id) { return state.store.is_labeled(id); });
    p.query = truncate(merged, query_budget(state.c_active, state.n_active, config_.k_active));

    json kl = json::array();
    for (int i = 0; i < 2; ++i) kl.push_back({{"initial", p.kl[i].front().kl}, {"final", p.kl[i].back().kl}});
    emit({{"type", "interval"},
          {"fold", fold_index_},
          {"epoch", epoch},
          {"kl", kl},
          {"labeled", state.store.labeled_count()},
          {"query_candidates", {queries[0].ids(), queries[1].ids()}},
          {"warnings", p.warnings}});
    if (!hooks_.snapshot_dir.empty()) write_snapshots(state, p, false);
    state.pending = std::move(p);
}

void FoldTrainer::record_checkpoint_metrics(FoldState& state, int epoch, bool final) {
    const auto labeled = state.store.labeled_count();
    for (double frac : config_.checkpoint_fractions) {
        const bool recorded = std::any_of(state.checkpoints.begin(), state.checkpoints.end(),
                                          [&](const CheckpointMetric& c) { return c.fraction == frac; });
        if (recorded || labeled < ceil_fraction(frac, dataset_.size())) continue;
        const auto [acc, kappa] = evaluate(state);
        state.checkpoints.push_back({frac, labeled, epoch, acc, kappa});
        emit({{"type", "metrics"},
              {"fold", fold_index_},
              {"epoch", epoch},
              {"checkpoint_fraction", frac},
              {"labeled", labeled},
              {"at", final ? "run_end" : "before_expansion"},
              {"accuracy", acc},
              {"kappa", kappa}});
    }
}

bool FoldTrainer::finish_interval(FoldState& state) {
    auto& p = *state.pending;
    IntervalRecord rec;
    rec.fold = fold_index_;
    rec.epoch = p.epoch;
    rec.c_active_before = state.c_active;
    if (!p.query.items.empty()) {
        rec.oracle_called = true;
        if (!p.query_sent) {
            record_checkpoint_metrics(state, p.epoch - 1, false);
            json v = json::array();
            for (const auto& q : p.query.items) v.push_back(q.confidence);
            emit({{"type", "oracle_query"},
                  {"fold", fold_index_},
                  {"epoch", p.epoch},
                  {"ids", p.query.ids()},
                  {"v_values", v},
                  {"c_active", state.c_active},
                  {"n_active", state.n_active}});
            p.query_sent = true;
        }
        if (!hooks_.oracle) throw std::logic_error("no oracle configured");
        if (hooks_.oracle->interactive()) {
            state.phase = Phase::WaitingForLabels;
            if (!p.barrier_saved) {
                p.barrier_saved = true;
                if (hooks_.checkpoint) hooks_.checkpoint(state);
            }
            publish(state);
        }
        auto answer = hooks_.oracle->label(p.epoch, p.query);
        if (!answer) return false;
        std::vector<SampleId> ids;
        for (const auto& q : p.query.items) {
            auto it = answer->labels.find(q.id);
            if (it == answer->labels.end()) continue;
            state.store.set_oracle(q.id, it->second);
            ids.push_back(q.id);
        }
        state.c_active += ids.size();
        json v = json::array();
        for (const auto& q : p.query.items) v.push_back(q.confidence);
        json ev{{"type", "oracle_answer"},   {"fold", fold_index_},         {"epoch", p.epoch},
                {"ids", ids},                {"v_values", v},               {"answered_by", answer->answered_by},
                {"c_active", state.c_active}};
        if (hooks_.oracle->interactive()) ev["latency"] = answer->latency_seconds;
        emit(ev);
    }
    state.phase = Phase::Main;
    rec.c_active_after = state.c_active;

    auto is_labeled = [&](SampleId id) { return state.store.is_labeled(id); };
    for (int i = 0; i < 2; ++i) state.pl[i] = select_confident(without(p.props[i], is_labeled), config_.pl_frac, i + 1);
    if (hooks_.observer) hooks_.observer->adjust_pseudo_labels(fold_index_, p.epoch, state.pl);
    rec.pl = state.pl;
    if (hooks_.observer) hooks_.observer->on_interval(rec);

    if (!hooks_.snapshot_dir.empty()) write_snapshots(state, p, true);
    state.pending.reset();
    publish(state);
    return true;
}

std::filesystem::path snapshot_path(const std::filesystem::path& dir, int fold, int epoch, int network,
                                    const std::string& kind) {
    char name[64];
    std::snprintf(name, sizeof(name), "e%04d_net%d_%s.csv", epoch, network, kind.c_str());
    return dir / ("fold" + std::to_string(fold)) / name;
}

std::optional<std::filesystem::path> FoldTrainer::latest_projection(const FoldState& state, int network) const {
    if (hooks_.snapshot_dir.empty()) return std::nullopt;
    const int top = state.pending ? state.pending->epoch : state.epoch;
    for (int e = top; e > config_.w_epochs; --e) {
        if (!interval_due(e, config_.w_epochs, config_.e_int)) continue;
        auto path = snapshot_path(hooks_.snapshot_dir, fold_index_, e, network, "projection");
        if (std::filesystem::exists(path)) return path;
    }
    return std::nullopt;
}

void FoldTrainer::write_snapshots(const FoldState& state, const PendingInterval& p, bool final) const {
    std::set<SampleId> queried;
    for (const auto& q : p.query.items) queried.insert(q.id);
    for (int i = 0; i < 2; ++i) {
        std::set<SampleId> chosen;
        if (final)
            for (const auto& e : state.pl[i].entries) chosen.insert(e.id);
        std::vector<ProjectionRow> rows;
        rows.reserve(train_ids_.size());
        for (std::size_t r = 0; r < train_ids_.size(); ++r) {
            const auto id = train_ids_[r];
            ProjectionRow row;
            row.id = id;
            row.x = p.coords[i](r, 0);
            row.y = p.coords[i](r, 1);
            const auto& st = state.store.state(id);
            if (st.is_labeled()) {
                row.state = st.kind == LabelKind::SeedLabeled ? "seed" : "oracle";
                row.label_or_pseudo = st.label;
                row.confidence = 1.0;
            } else {
                const auto* e = p.props[i].find(id);
                row.state = queried.contains(id) ? "query" : chosen.contains(id) ? "pseudo" : "unlabeled";
                row.label_or_pseudo = e ? e->pseudo_label : -1;
                row.confidence = e ? e->confidence : 0.0;
            }
            rows.push_back(row);
        }
        write_projection_csv(snapshot_path(hooks_.snapshot_dir, fold_index_, p.epoch, i + 1, "projection"), rows);
        write_propagation_csv(snapshot_path(hooks_.snapshot_dir, fold_index_, p.epoch, i + 1, "propagation"),
                              p.props[i]);
    }
}

std::pair<double, double> FoldTrainer::evaluate(const FoldState& state) const {
    const auto pred = ensemble_predict(state.nets[0].params, state.nets[1].params, test_x_);
    return {accuracy(pred, test_y_), cohens_kappa(pred, test_y_, dataset_.num_classes())};
}

FoldTrainer::Outcome FoldTrainer::run(FoldState& state) {
    if (state.phase == Phase::Done) return Outcome::Done;
    for (int e = state.epoch + 1; e <= config_.n_epochs; ++e) {
        json summary{{"type", "epoch_end"}, {"fold", fold_index_}, {"epoch", e}};
        if (e <= config_.w_epochs) {
            state.phase = Phase::Warmup;
            warmup_epoch(state, e, summary);
        } else {
            if (state.pending && state.pending->epoch != e) throw std::logic_error("stale pending interval");
            if (!state.pending && interval_due(e, config_.w_epochs, config_.e_int)) start_interval(state, e);
            if (state.pending && !finish_interval(state)) return Outcome::Waiting;
            state.phase = Phase::Main;
            main_epoch(state, e, summary);
        }
        state.epoch = e;
        summary["phase"] = to_string(state.phase);
        summary["c_active"] = state.c_active;
        summary["labeled"] = state.store.labeled_count();
        emit(summary);
        publish(state, summary);
        if (config_.checkpoint_every > 0 && e % config_.checkpoint_every == 0 && e < config_.n_epochs &&
            hooks_.checkpoint) {
            hooks_.checkpoint(state);
        }
        if (config_.halt_after_epoch == e && config_.halt_fold == fold_index_) return Outcome::Halted;
    }
    record_checkpoint_metrics(state, state.epoch, true);
    const auto [acc, kappa] = evaluate(state);
    state.final_accuracy = acc;
    state.final_kappa = kappa;
    state.phase = Phase::Done;
    emit({{"type", "metrics"},
          {"fold", fold_index_},
          {"epoch", state.epoch},
          {"final", true},
          {"labeled", state.store.labeled_count()},
          {"c_active", state.c_active},
          {"accuracy", acc},
          {"kappa", kappa}});
    publish(state);
    return Outcome::Done;
}

std::vector<SampleId> stratified_subset(const std::vector<SampleId>& ids, const Dataset& dataset, std::size_t count,
                                        Rng& rng) {
    std::map<ClassIndex, std::vector<SampleId>> groups;
    for (auto id : ids) groups[dataset.label_of(id)].push_back(id);
    count = std::min(count, ids.size());
    struct Share {
        ClassIndex label;
        std::size_t quota;
        double remainder;
    };
    std::vector<Share> shares;
    std::size_t assigned = 0;
    for (auto& [label, members] : groups) {
        std::sort(members.begin(), members.end());
        rng.shuffle(members.begin(), members.end());
        const double exact = static_cast<double>(count) * static_cast<double>(members.size()) /
                             static_cast<double>(ids.size());
        const auto q = static_cast<std::size_t>(std::floor(exact));
        shares.push_back({label, q, exact - static_cast<double>(q)});
        assigned += q;
    }
    std::vector<std::size_t> order(shares.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return shares[a].remainder > shares[b].remainder; });
    for (std::size_t k = 0; assigned < count && k < order.size(); ++k, ++assigned) ++shares[order[k]].quota;
    // every class gets at least one when the budget allows
    for (auto& s : shares) {
        if (s.quota > 0 || count < shares.size()) continue;
        auto donor = std::max_element(shares.begin(), shares.end(),
                                      [](const Share& a, const Share& b) { return a.quota < b.quota; });
        --donor->quota;
        ++s.quota;
    }
    std::vector<SampleId> out;
    for (const auto& s : shares) {
        const auto& members = groups[s.label];
        out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(std::min(s.quota, members.size())));
    }
    std::sort(out.begin(), out.end());
    return out;
}

BaselineResult train_supervised_baseline(const RunConfig& config, const Dataset& dataset, const Fold& fold,
                                         int fold_index, std::size_t labeled_count) {
    const auto fs = mix_seed(fold_seed(config.seed, fold_index), 77);
    Rng rng(fs);
    auto train = fold.train;
    std::sort(train.begin(), train.end());
    const auto labeled = stratified_subset(train, dataset, labeled_count, rng);

    Arch a;
    a.input_dim = dataset.dim();
    a.encoder = config.encoder;
    a.contrastive = config.contrastive_head;
    a.num_classes = static_cast<std::size_t>(dataset.num_classes());
    NetState net;
    net.params = init_params(a, mix_seed(fs, 1));
    const std::uint64_t total =
        static_cast<std::uint64_t>(config.n_epochs) * batch_count(labeled.size(), config.batch_size);
    net.optimizer = OptimizerState::for_params(net.params, total, config.lr0, config.momentum, config.weight_decay,
                                               config.nesterov);
    net.rng = Rng(mix_seed(fs, 2));
    for (int e = 1; e <= config.n_epochs; ++e) {
        for (const auto& b : make_batches(labeled, config.batch_size, rng)) {
            Tape tape;
            BoundNetwork bn(tape, net.params);
            const Matrix x = augment_rows(dataset.gather(b), config.weak, net.rng);
            std::vector<ClassIndex> y;
            for (auto id : b) y.push_back(dataset.label_of(id));
            const auto loss = tape.softmax_cross_entropy(bn.classifier_head(bn.encode(tape.constant(x))), y);
            tape.backward(loss);
            auto grads = bn.gradients();
            clip_gradients(grads, config.grad_clip);
            sgd_step(net.params, grads, net.optimizer);
        }
    }
    const Matrix xt = dataset.gather(fold.test);
    std::vector<ClassIndex> truth, pred;
    const Matrix q = classify(net.params, xt);
    for (std::size_t i = 0; i < fold.test.size(); ++i) {
        truth.push_back(dataset.label_of(fold.test[i]));
        const auto row = q.row(i);
        pred.push_back(static_cast<ClassIndex>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
    return {accuracy(pred, truth), cohens_kappa(pred, truth, dataset.num_classes()), labeled.size()};
}

} // namespace opal
