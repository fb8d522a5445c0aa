#include "rcir/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rcir/rng.hpp"

namespace rcir {

namespace {

struct CheckInstance {
    std::vector<Image> references;
    std::vector<Image> counterfactuals;
    std::vector<Image> targets;
    std::vector<TokenSeq> token_seqs;
    std::vector<BatchSample> batch;
};

CheckInstance build_instance(int batch_size, int image_size, std::uint64_t seed) {
    AttributeSpace space;
    CheckInstance inst;
    Rng rng(seed);
    for (int i = 0; i < batch_size; ++i) {
        AttributeVector ref_attrs{
            static_cast<int>(rng.below(static_cast<std::uint64_t>(space.shapes))),
            static_cast<int>(rng.below(static_cast<std::uint64_t>(space.colors))),
            static_cast<int>(rng.below(static_cast<std::uint64_t>(space.sizes))),
            static_cast<int>(rng.below(static_cast<std::uint64_t>(space.positions)))};
        AttributeVector tgt_attrs = ref_attrs;
        tgt_attrs.color_id = (ref_attrs.color_id + 1) % space.colors;
        inst.references.push_back(
            render_image(ref_attrs, 0.3, rng.next_u64(), image_size, space));
        inst.targets.push_back(
            render_image(tgt_attrs, 0.3, rng.next_u64(), image_size, space));
        inst.token_seqs.push_back(
            TokenSeq{encode_edit(Edit{1, tgt_attrs.color_id}, space)});
    }
    for (int i = 0; i < batch_size; ++i) {
        MixParams mix{0.5, 0.25, 0};
        const int partner = (i + 1) % batch_size;
        inst.counterfactuals.push_back(make_counterfactual(
            inst.references[static_cast<std::size_t>(i)],
            inst.references[static_cast<std::size_t>(partner)], mix));
    }
    inst.batch.resize(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        BatchSample& s = inst.batch[static_cast<std::size_t>(i)];
        s.reference = &inst.references[static_cast<std::size_t>(i)];
        s.counterfactual = &inst.counterfactuals[static_cast<std::size_t>(i)];
        s.target = &inst.targets[static_cast<std::size_t>(i)];
        s.tokens = &inst.token_seqs[static_cast<std::size_t>(i)];
    }
    return inst;
}

struct LossCase {
    std::string name;
    AblationToggles toggles;
    LossWeights weights;
};

std::vector<LossCase> loss_cases() {
    std::vector<LossCase> cases;
    {
        LossCase c;
        c.name = "robust";
        c.toggles.enable_invariance = false;
        c.toggles.enable_soft = false;
        c.weights = {0.0, 0.0};
        cases.push_back(c);
    }
    {
        LossCase c;
        c.name = "soft_discriminative";
        c.toggles.enable_invariance = false;
        c.toggles.enable_robust = false;
        c.weights = {1.0, 0.0};
        cases.push_back(c);
    }
    {
        LossCase c;
        c.name = "consistency_cka";
        c.toggles.enable_robust = false;
        c.toggles.enable_soft = false;
        c.weights = {0.0, 1.0};
        cases.push_back(c);
    }
    {
        LossCase c;
        c.name = "total";
        c.weights = {0.2, 0.6};
        cases.push_back(c);
    }
    return cases;
}

}  // namespace

std::vector<GradCheckReport> run_gradient_suite(const GradCheckSettings& settings) {
    std::vector<GradCheckReport> reports;
    const double tau = 0.07;

    for (int b : settings.batch_sizes) {
        CheckInstance inst =
            build_instance(b, settings.image_size, mix_seed(settings.seed, 101,
                                                            static_cast<std::uint64_t>(b)));
        ComposerConfig cc;
        cc.patch_size = 8;
        cc.channels = 3;
        cc.vocab_size = AttributeSpace{}.vocab_size();
        cc.query_count = settings.query_count;
        cc.embed_dim = settings.embed_dim;
        cc.hidden_dim = settings.hidden_dim;
        cc.init_seed = mix_seed(settings.seed, 102, static_cast<std::uint64_t>(b));
        const ComposerParams base = init_params(cc);

        for (const LossCase& lc : loss_cases()) {
            ComposerGrads grads = make_zero_grads(cc);
            batch_loss_and_grads(base, inst.batch, tau, lc.weights, lc.toggles, &grads);
            const Vec analytic = grad_vector(grads);

            ComposerParams probe = base;
            Vec flat = param_vector(base);
            GradCheckReport report;
            report.label = lc.name + "/B=" + std::to_string(b);
            report.pass = true;
            for (std::size_t k = 0; k < flat.size(); ++k) {
                const double orig = flat[k];
                flat[k] = orig + settings.fd_epsilon;
                set_param_vector(probe, flat);
                const double fp = batch_loss_and_grads(probe, inst.batch, tau, lc.weights,
                                                       lc.toggles, nullptr)
                                      .total;
                flat[k] = orig - settings.fd_epsilon;
                set_param_vector(probe, flat);
                const double fm = batch_loss_and_grads(probe, inst.batch, tau, lc.weights,
                                                       lc.toggles, nullptr)
                                      .total;
                flat[k] = orig;
                const double fd = (fp - fm) / (2.0 * settings.fd_epsilon);
                const double diff = std::abs(analytic[k] - fd);
                const double mag = std::max(std::abs(analytic[k]), std::abs(fd));
                if (diff > settings.abs_floor) {
                    if (diff > settings.rel_tol * mag) report.pass = false;
                    report.max_rel_err = std::max(report.max_rel_err, diff / mag);
                }
                ++report.checked;
            }
            set_param_vector(probe, flat);
            reports.push_back(std::move(report));
        }
    }
    return reports;
}

bool gradient_suite_passed(const std::vector<GradCheckReport>& reports) {
    return std::all_of(reports.begin(), reports.end(),
                       [](const GradCheckReport& r) { return r.pass; });
}

}  // namespace rcir
