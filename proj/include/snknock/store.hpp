#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "snknock/challenge.hpp"

struct sqlite3;

namespace snknock {

inline constexpr std::uint64_t kDefaultBlobCap = 10ull * 1024 * 1024;

/// On-disk layout:
///   {data_dir}/records.sqlite3   challenge and answer tables
///   {data_dir}/blobs/            one file per answer, "{audio_name}{ext}"
/// In-flight blob writes use "{final name}.tmp" in the blob directory.
struct StoreLayout {
  std::filesystem::path data_dir;
  std::filesystem::path records_file;
  std::filesystem::path blobs_dir;

  static StoreLayout under(const std::filesystem::path& data_dir);
};

struct StoreOptions {
  std::filesystem::path data_dir;
  std::uint64_t max_blob_bytes = kDefaultBlobCap;
};

/// Points inside put_answer where a test hook may simulate a crash by
/// throwing. The store does no cleanup when the hook throws.
enum class FaultPoint { AfterTempWrite, AfterBlobRename, BeforeCommit };

struct RecoveryReport {
  std::size_t temp_files_removed = 0;
  std::size_t orphan_blobs_removed = 0;
  std::size_t records_missing_blob = 0;
};

/// File extension used for a stored blob of the given media type.
std::string blob_extension(std::string_view media_type);

class Store {
 public:
  explicit Store(StoreOptions options);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const StoreLayout& layout() const { return layout_; }
  std::uint64_t max_blob_bytes() const { return options_.max_blob_bytes; }

  /// Result of the recovery sweep run when the store was opened. The sweep
  /// only runs when no other process has the data directory open.
  const RecoveryReport& last_recovery() const { return recovery_; }
  bool recovered_on_open() const { return recovered_on_open_; }
  RecoveryReport recover();

  ChallengeRecord put_challenge(ChallengeRecord record,
                                std::optional<std::string> owner_token = std::nullopt);
  ChallengeRecord get_challenge(std::int64_t id) const;
  std::vector<ChallengeRecord> list_challenges() const;
  /// False when the challenge has no token or the token differs.
  bool check_owner_token(std::int64_t challenge_id, std::string_view token) const;

  AnswerRecord put_answer(AnswerRecord record, const AudioBlob& blob);
  AnswerRecord get_answer(std::int64_t id) const;
  AudioBlob get_blob(std::string_view audio_name) const;
  std::vector<AnswerRecord> list_answers(std::int64_t challenge_id) const;
  void update_answer_decision(const AnswerRecord& record);
  void set_notified(std::int64_t answer_id, bool notified);

  std::filesystem::path blob_path(std::string_view audio_name,
                                  std::string_view media_type) const;

  void set_fault_hook(std::function<void(FaultPoint)> hook) { fault_hook_ = std::move(hook); }

 private:
  void open_database();
  void fault(FaultPoint p) const {
    if (fault_hook_) fault_hook_(p);
  }
  bool challenge_exists_locked(std::int64_t id) const;
  std::optional<AnswerRecord> find_answer_locked(std::int64_t id) const;

  StoreOptions options_;
  StoreLayout layout_;
  sqlite3* db_ = nullptr;
  int lock_fd_ = -1;
  bool recovered_on_open_ = false;
  mutable std::shared_mutex mutex_;
  RecoveryReport recovery_;
  std::function<void(FaultPoint)> fault_hook_;
};

}  // namespace snknock
