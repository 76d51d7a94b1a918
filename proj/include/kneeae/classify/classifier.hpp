#pragma once

#include "kneeae/classify/cart.hpp"
#include "kneeae/classify/lda.hpp"
#include "kneeae/classify/svm.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

namespace kneeae {

enum class ClassifierKind { svm_linear, svm_gaussian, lda, cart };

inline constexpr std::array all_classifier_kinds{ClassifierKind::svm_linear, ClassifierKind::svm_gaussian,
                                                 ClassifierKind::lda, ClassifierKind::cart};

inline std::string_view to_string(ClassifierKind k) {
    switch (k) {
    case ClassifierKind::svm_linear: return "svm-linear";
    case ClassifierKind::svm_gaussian: return "svm-gaussian";
    case ClassifierKind::lda: return "lda";
    case ClassifierKind::cart: return "cart";
    }
    return "unknown";
}

inline ClassifierKind parse_classifier(std::string_view s) {
    for (auto k : all_classifier_kinds)
        if (to_string(k) == s) return k;
    throw Error(Errc::config, "unknown classifier '" + std::string(s) + "'");
}

/// A trained model of any supported kind. Scores above threshold() predict
/// abnormal; the raw score is what the ROC sees.
struct Classifier {
    ClassifierKind kind = ClassifierKind::svm_linear;
    std::variant<SvmModel, LdaModel, CartModel> model;

    double threshold() const { return kind == ClassifierKind::cart ? 0.5 : 0.0; }

    Vector scores(const Matrix& x) const {
        return std::visit(
            [&](const auto& m) -> Vector {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, SvmModel>) return m.decisions(x);
                else return m.scores(x);
            },
            model);
    }

    double score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        return std::visit(
            [&](const auto& m) -> double {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, SvmModel>) return m.decision(x);
                else return m.score(x);
            },
            model);
    }
};

struct TrainOptions {
    SmoOptions smo;
    double gamma = 1.0;
    CartOptions cart;
};

/// `seed` only feeds the CART pruning CV; the other trainers are deterministic.
inline Classifier train_classifier(ClassifierKind kind, const Matrix& x, std::span<const int> y,
                                   std::uint64_t seed = 0, const TrainOptions& opt = {}) {
    switch (kind) {
    case ClassifierKind::svm_linear: return {kind, svm_train(x, y, Kernel::linear(), opt.smo)};
    case ClassifierKind::svm_gaussian: return {kind, svm_train(x, y, Kernel::gaussian(opt.gamma), opt.smo)};
    case ClassifierKind::lda: return {kind, lda_train(x, y)};
    case ClassifierKind::cart: {
        CartOptions c = opt.cart;
        c.seed = seed;
        return {kind, cart_train(x, y, c)};
    }
    }
    throw Error(Errc::config, "unknown classifier");
}

inline nlohmann::json to_json(const Classifier& c) {
    auto j = std::visit([](const auto& m) { return to_json(m); }, c.model);
    j["classifier"] = std::string(to_string(c.kind));
    return j;
}

inline Classifier classifier_from_json(const nlohmann::json& j) {
    const auto kind = parse_classifier(j.at("classifier").get<std::string>());
    switch (kind) {
    case ClassifierKind::svm_linear:
    case ClassifierKind::svm_gaussian: return {kind, svm_from_json(j)};
    case ClassifierKind::lda: return {kind, lda_from_json(j)};
    case ClassifierKind::cart: return {kind, cart_from_json(j)};
    }
    throw Error(Errc::format, "unknown classifier in model file");
}

}  // namespace kneeae
