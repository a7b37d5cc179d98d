#pragma once
// Prompt encoding: fixed template-token embeddings plus one learned identifier
// row per category. The identifier is the only trainable, category-unique row
// in the background prompt; the product prompt carries a fixed category-name
// token. A shared-prompt mode (single identifier, generic name token) backs
// the no-identifier ablation.

#include <string>
#include <vector>

#include "bgg/nn.hpp"

namespace bgg {

template <typename T>
struct PromptPairT {
    Tensor<T> p_fg;  // (Lf, d)
    Tensor<T> p_bg;  // (Lb, d); last row is the identifier
};

using PromptPair = PromptPairT<float>;

inline constexpr const char* kFgTemplateTokens[] = {"a", "photo", "of"};
inline constexpr const char* kBgTemplateTokens[] = {"in", "the", "background", "of"};
inline constexpr int kFgTemplateLen = 3;
inline constexpr int kBgTemplateLen = 4;

template <typename T>
class PromptEncoder {
public:
    PromptEncoder() = default;

    PromptEncoder(ParamRegistry<T>& reg, const Rng& root, int dim, std::vector<std::string> categories,
                  bool shared_prompt)
        : dim_(dim), shared_(shared_prompt), categories_(std::move(categories)) {
        int k = num_categories();
        fg_template_ = Tensor<T>(Shape{kFgTemplateLen, dim});
        for (int i = 0; i < kFgTemplateLen; ++i) fill_token_row(fg_template_, i, root, kFgTemplateTokens[i]);
        bg_template_ = Tensor<T>(Shape{kBgTemplateLen, dim});
        for (int i = 0; i < kBgTemplateLen; ++i) fill_token_row(bg_template_, i, root, kBgTemplateTokens[i]);

        int name_rows = shared_ ? 1 : k;
        name_tokens_ = Tensor<T>(Shape{name_rows, dim});
        for (int i = 0; i < name_rows; ++i)
            fill_token_row(name_tokens_, i, root, shared_ ? std::string("object") : ("category:" + categories_[size_t(i)]));

        int id_rows = shared_ ? 1 : k;
        identifiers_ = &reg.create("prompts.identifiers",
                                   init_normal<T>({id_rows, dim}, root, "prompts.identifiers", T(1)));
    }

    int dim() const { return dim_; }
    int num_categories() const { return static_cast<int>(categories_.size()); }
    bool shared_prompt() const { return shared_; }
    const std::vector<std::string>& categories() const { return categories_; }
    Param<T>& identifier_table() { return *identifiers_; }
    const Param<T>& identifier_table() const { return *identifiers_; }

    int fg_len() const { return kFgTemplateLen + 1; }
    int bg_len() const { return kBgTemplateLen + 1; }

    // Tensor-level prompt pair for one category (identifier row materialized).
    PromptPairT<T> encode(int category_id) const {
        check_category(category_id);
        int row = shared_ ? 0 : category_id;
        PromptPairT<T> out;
        out.p_fg = Tensor<T>(Shape{fg_len(), dim_});
        std::copy_n(fg_template_.data(), fg_template_.numel(), out.p_fg.data());
        std::copy_n(name_tokens_.data() + int64_t(row) * dim_, dim_,
                    out.p_fg.data() + int64_t(kFgTemplateLen) * dim_);
        out.p_bg = Tensor<T>(Shape{bg_len(), dim_});
        std::copy_n(bg_template_.data(), bg_template_.numel(), out.p_bg.data());
        std::copy_n(identifiers_->value.data() + int64_t(row) * dim_, dim_,
                    out.p_bg.data() + int64_t(kBgTemplateLen) * dim_);
        return out;
    }

    // Graph-level batched contexts. p_fg is constant; p_bg routes gradients
    // into the identifier table.
    typename Graph<T>::Var build_fg(Graph<T>& g, const std::vector<int>& category_ids) const {
        int n = static_cast<int>(category_ids.size());
        Tensor<T> fg(Shape{n, fg_len(), dim_});
        for (int i = 0; i < n; ++i) {
            check_category(category_ids[size_t(i)]);
            int row = shared_ ? 0 : category_ids[size_t(i)];
            T* dst = fg.data() + int64_t(i) * fg_len() * dim_;
            std::copy_n(fg_template_.data(), fg_template_.numel(), dst);
            std::copy_n(name_tokens_.data() + int64_t(row) * dim_, dim_, dst + int64_t(kFgTemplateLen) * dim_);
        }
        return g.input(std::move(fg));
    }

    typename Graph<T>::Var build_bg(Graph<T>& g, const std::vector<int>& category_ids) const {
        int n = static_cast<int>(category_ids.size());
        Tensor<T> tmpl(Shape{n, kBgTemplateLen, dim_});
        std::vector<int> rows(category_ids.size());
        for (int i = 0; i < n; ++i) {
            check_category(category_ids[size_t(i)]);
            rows[size_t(i)] = shared_ ? 0 : category_ids[size_t(i)];
            std::copy_n(bg_template_.data(), bg_template_.numel(), tmpl.data() + int64_t(i) * kBgTemplateLen * dim_);
        }
        auto ids = g.reshape(g.rows_select(g.param(*identifiers_), rows), {n, 1, dim_});
        return g.concat(g.input(std::move(tmpl)), ids, 1);
    }

private:
    int dim_ = 0;
    bool shared_ = false;
    std::vector<std::string> categories_;
    Tensor<T> fg_template_;
    Tensor<T> bg_template_;
    Tensor<T> name_tokens_;
    Param<T>* identifiers_ = nullptr;

    void check_category(int id) const {
        require(id >= 0 && id < num_categories(), ErrorKind::lookup,
                "unknown category id " + std::to_string(id));
    }

    static void fill_token_row(Tensor<T>& t, int row, const Rng& root, const std::string& token) {
        int d = t.dim(1);
        Rng r = root.fork("token:" + token);
        for (int j = 0; j < d; ++j) t[int64_t(row) * d + j] = static_cast<T>(r.normal());
    }
};

}  // namespace bgg
